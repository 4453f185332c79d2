import numpy as np
import pytest

from wildfusion import synth


@pytest.fixture(scope="session")
def scene():
    return synth.generate_scene(0)


@pytest.fixture(scope="session")
def frame(scene):
    return synth.make_frame(scene, (-6.0, 0.0, 0.0), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def prepared(frame):
    from wildfusion.training import prepare_frame

    return prepare_frame(frame)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for _, _, line in sorted(results):
            terminalreporter.write_line(line)
