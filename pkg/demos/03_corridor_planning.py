"""
Why height alone is not enough
==============================

A rock wall spans the map except for a corridor filled with knee-high
vegetation. A planner that only sees heights treats the vegetation as a wall;
one that knows it is vegetation (and that the robot's own feet report an easy
gait) can push through it.

This demo builds both costmaps from the exact scene instead of a trained
field, so it runs in seconds. The acceptance suite repeats the comparison on
a learned field.

Run: python demos/03_corridor_planning.py
"""

import numpy as np

from wildfusion import nav, synth, training
from wildfusion.scene import DEFAULT_SEMANTICS

NULL = DEFAULT_SEMANTICS.null_id
scene = synth.corridor_scene()
spec = nav.GridSpec.covering(-4, 4, -4, 4, 0.1)
start, goal = spec.cell_of((0.0, -3.0)), spec.cell_of((0.0, 3.0))

# Exact field samples on the planner grid: SDF plus one-hot semantic logits.
zs = np.linspace(-0.5, 0.7, 13)
X, Y, Z = np.meshgrid(spec.x_centers(), spec.y_centers(), zs, indexing="ij")
pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
sdf = synth.scene_sdf(scene, pts)
_, ids = synth.surface_attributes(scene, pts, np.argmin(synth.scene_components(scene, pts), axis=1))
logits = np.full((len(pts), NULL + 1), -1.0)
logits[np.arange(len(pts)), np.where(sdf > 0.5, NULL, ids)] = 1.0
field = training.GridPrediction(spec.x_centers(), spec.y_centers(), zs, sdf.reshape(X.shape), None, None,
                                logits.reshape(X.shape + (-1,)), None, 1.0)

semantic, elevation = nav.project_field_to_grids(field, spec)
print("class at the corridor:", DEFAULT_SEMANTICS.entries[semantic[spec.cell_of((0, 0))]].name)
print("height at the corridor:", round(float(elevation[spec.cell_of((0, 0))]), 3), "m")

# Elevation only: the 0.45 m step onto the vegetation exceeds the step limit.
elev = nav.elevation_costmap(elevation, spec)
route = nav.a_star(elev, start, goal)
print("elevation-only:", "NO_PATH" if not route else f"{route.length_m(spec.cell_size):.2f} m")

# Semantics blended with the robot's measured traversability near its own cell.
full = nav.full_costmap(semantic, spec, start, 0.9)
route = nav.a_star(full, start, goal)
xs = [spec.center_of(c)[0] for c in route.cells]
print(f"full model: {route.length_m(spec.cell_size):.2f} m, cost {route.total_cost:.1f}, "
      f"x stays within [{min(xs):.2f}, {max(xs):.2f}]")

# Text rendering of the full costmap: '#' impassable, '*' path, digits cost bands.
on_path = set(route.cells)
for r in range(spec.shape[0] - 1, -1, -4):
    row = ""
    for c in range(0, spec.shape[1], 2):
        cost = full.cost[r, c]
        row += "*" if (r, c) in on_path else "#" if not np.isfinite(cost) else str(min(9, int(cost)))
    print(row)
