"""
A synthetic frame and its labels
================================

Build a random outdoor scene, drive the robot to one pose, and look at what a
single frame holds: a colored lidar cloud, four leg microphones, IMU and
tactile traces. Then turn the frame into labeled query points.

Run: python demos/01_scene_and_labels.py
"""

import numpy as np

from wildfusion import synth
from wildfusion.audio import MelConfig, frame_mel_stack
from wildfusion.labeling import label_frame
from wildfusion.scene import DEFAULT_SEMANTICS, KIND_FREE, KIND_NAMES, KIND_NEGATIVE

np.set_printoptions(precision=3, suppress=True)

# Scenes are pure functions of their seed.
scene = synth.generate_scene(0)
print("primitives:", len(scene.primitives), "terrain patches:", len(scene.patch_classes))

# One frame at the start of the default walk.
frame = synth.make_frame(scene, (-6.0, 0.0, 0.0), 0)
cloud = frame.cloud
print("cloud points:", len(cloud), "sensor origin:", cloud.sensor_origin)

# Which classes did the lidar see?
names = {c.id: c.name for c in DEFAULT_SEMANTICS.entries}
ids, counts = np.unique(cloud.semantic_ids, return_counts=True)
for i, n in zip(ids, counts):
    print(f"  {names.get(int(i), 'NULL'):>10s}: {n}")

# Audio becomes a stack of log-mel spectrograms, one per leg.
mel = frame_mel_stack(frame.audio, MelConfig(sample_rate=frame.sample_rate))
print("mel stack (legs, mels, time):", mel.shape)

# Every lidar ray yields a surface sample, free-space samples in front of the
# hit and negative samples behind it.
samples, traversability = label_frame(frame)
kinds, counts = np.unique(samples.kinds, return_counts=True)
print("query samples:", dict(zip((KIND_NAMES[int(k)] for k in kinds), counts.tolist())))
print("free sdf range:", samples.sdf[samples.kinds == KIND_FREE].min(), samples.sdf[samples.kinds == KIND_FREE].max())
print("negative confidence range:", samples.confidence[samples.kinds == KIND_NEGATIVE].min(),
      samples.confidence[samples.kinds == KIND_NEGATIVE].max())
print("traversability score from IMU and tactile:", round(traversability, 3))

# Labels are distances to the observed cloud; compare them with the scene itself.
free = samples.kinds == KIND_FREE
exact = synth.scene_sdf(scene, samples.positions[free].astype(float))
print("mean |label - exact sdf| on free samples:", np.abs(samples.sdf[free] - exact).mean())
