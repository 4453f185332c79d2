"""Multimodal implicit mapping on synthetic outdoor scenes.

Submodules: ``scene``, ``synth``, ``labeling``, ``audio``, ``model``,
``training``, ``nav``, ``metrics``, ``io``, ``config``, ``pipeline``, ``cli``.
"""

__version__ = "0.1.0"
