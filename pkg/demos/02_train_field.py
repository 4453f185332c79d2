"""
Fitting the multimodal field
============================

Train a reduced-width field on a handful of frames for a few hundred steps,
then query it: signed distance, confidence, color, semantics and the scalar
traversability all come out of one forward pass. Takes a minute or two on a
laptop CPU; the full-size model and 3,000 steps are used by the acceptance
suite.

Run: python demos/02_train_field.py [steps]
"""

import sys
import time

import numpy as np

from wildfusion import io, synth, training
from wildfusion.model import ModelConfig

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300

scene = synth.generate_scene(0)
frames = synth.make_dataset(scene, synth.straight_trajectory(4))
prepared = [training.prepare_frame(f) for f in frames]

small = ModelConfig(point_dims=(32, 64, 128), trunk_width=128, head_width=64)
t0 = time.time()
result = training.train(prepared, training.TrainConfig(steps=steps, eval_every=50), model_config=small)
print(f"{steps} steps in {time.time() - t0:.0f}s, best validation step {result.best_step}")
first, last = result.log[0], result.log[-1]
for term in ("sdf", "eikonal", "confidence", "semantics", "color", "traversability"):
    print(f"  {term:>14s}: {getattr(first, term):.4f} -> {getattr(last, term):.4f}")

# Predictions at the labeled queries of the first frame.
frame = prepared[0]
pred = training.predict(result.model, frame, frame.samples.positions)
print("sdf MAE:", np.abs(pred.sdf - frame.samples.sdf).mean())
print("semantic accuracy:", np.mean(pred.semantic_ids == frame.samples.semantic_ids))
print("traversability: predicted", round(pred.traversability, 3), "label", round(frame.traversability, 3))

# A horizontal slice of the field at 0.3 m, written as an 8-bit PGM.
grid = training.query_grid(result.model, frame, ((-8, -2), (-3, 3), (0.3, 0.3)), (61, 61, 1))
io.write_pgm("field_slice.pgm", grid.sdf[:, :, 0].T)
print("wrote field_slice.pgm", grid.sdf.shape[:2])
