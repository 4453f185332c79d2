"""Ground-truth labels from a frame: ray-sampled SDF/confidence and traversability."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError
from .scene import (
    DEFAULT_SEMANTICS,
    KIND_FREE,
    KIND_NEGATIVE,
    KIND_SURFACE,
    N_COLOR_BINS,
    Frame,
    PointCloud,
    QuerySamples,
    lab_to_bins,
)
from .synth import GRAVITY, IDEAL_FORCE_FRACTIONS, synth_imu, synth_tactile


class SurfaceIndex:
    """Balanced K-D tree over surface point positions (30-point leaves)."""

    def __init__(self, positions, leaf_size: int = 30):
        positions = np.asarray(positions, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3 or len(positions) == 0:
            raise InputError("surface index needs a nonempty (N, 3) point array")
        self.positions = positions
        self.leaf_size = leaf_size
        self._tree = cKDTree(positions, leafsize=leaf_size, balanced_tree=True, compact_nodes=True)

    def __len__(self) -> int:
        return len(self.positions)

    def nearest(self, queries):
        """Distances and indices of the nearest surface point to each query."""
        queries = np.asarray(queries, dtype=float)
        dist, idx = self._tree.query(queries.reshape(-1, 3), k=1)
        if queries.ndim == 1:
            return float(dist[0]), int(idx[0])
        return dist, idx


def build_surface_index(cloud, leaf_size: int = 30) -> SurfaceIndex:
    positions = cloud.positions if isinstance(cloud, PointCloud) else cloud
    return SurfaceIndex(positions, leaf_size)


def sample_rays(origins, hits, n_free: int = 4, n_neg: int = 2, max_neg_depth: float = 0.5):
    """Vectorized :func:`sample_ray` over R rays.

    Returns ``(positions, kinds)`` of shapes ``(R, n_free + 1 + n_neg, 3)`` and
    ``(n_free + 1 + n_neg,)``. Free points sit at ``t = i / (n_free + 1)``
    between origin and hit; negative points at depths ``j * max_neg_depth / n_neg``
    past the hit.
    """
    if n_free < 0 or n_neg < 0:
        raise InputError("sample counts must be nonnegative")
    origins = np.broadcast_to(np.asarray(origins, dtype=float), np.shape(hits))
    hits = np.asarray(hits, dtype=float)
    ray = hits - origins
    length = np.linalg.norm(ray, axis=-1, keepdims=True)
    if np.any(length == 0):
        raise InputError("degenerate ray: origin coincides with hit point")
    direction = ray / length
    t_free = np.arange(1, n_free + 1) / (n_free + 1)
    depth = np.arange(1, n_neg + 1) * (max_neg_depth / n_neg) if n_neg else np.zeros(0)
    free = origins[:, None, :] + t_free[None, :, None] * ray[:, None, :]
    neg = hits[:, None, :] + depth[None, :, None] * direction[:, None, :]
    positions = np.concatenate([free, hits[:, None, :], neg], axis=1)
    kinds = np.array([KIND_FREE] * n_free + [KIND_SURFACE] + [KIND_NEGATIVE] * n_neg, dtype=np.int8)
    return positions, kinds


def sample_ray(origin, hit_point, n_free: int = 4, n_neg: int = 2, max_neg_depth: float = 0.5):
    """Samples along one LiDAR ray as a list of ``(position, kind)`` pairs."""
    positions, kinds = sample_rays(np.asarray(origin, float)[None], np.asarray(hit_point, float)[None],
                                   n_free, n_neg, max_neg_depth)
    return [(p, int(k)) for p, k in zip(positions[0], kinds)]


def assign_sdf_confidence(positions, kinds, index: SurfaceIndex, cloud: PointCloud,
                          decay_k: float = 5.0, table=DEFAULT_SEMANTICS) -> QuerySamples:
    """Label sample points against the frame's surface points.

    Free samples get ``+d`` and confidence 1 with NULL color/semantics; negative
    samples get ``-d`` and confidence ``exp(-decay_k * d)``; surface samples get
    0 and confidence 1. Non-free samples inherit the nearest point's attributes.
    """
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    kinds = np.asarray(kinds, dtype=np.int8).reshape(-1)
    dist, idx = index.nearest(positions)
    free = kinds == KIND_FREE
    neg = kinds == KIND_NEGATIVE
    sdf = np.where(free, dist, np.where(neg, -dist, 0.0))
    confidence = np.where(neg, np.exp(-decay_k * dist), 1.0)
    bins = lab_to_bins(np.asarray(cloud.colors_lab, dtype=float)[idx])
    bins[free] = N_COLOR_BINS
    semantic = np.asarray(cloud.semantic_ids, dtype=np.int64)[idx].copy()
    semantic[free] = table.null_id
    return QuerySamples(positions, sdf, confidence, bins, semantic, kinds)


@dataclass(frozen=True)
class TraversabilityCalibration:
    ideal_force_distribution: tuple = IDEAL_FORCE_FRACTIONS
    accel_variance_floor: float = 0.0
    accel_variance_ceiling: float = 1.0
    deviation_ceiling: float = 1.0

    def __post_init__(self):
        ideal = np.asarray(self.ideal_force_distribution, dtype=float)
        if ideal.shape != (4,) or np.any(ideal < 0) or abs(ideal.sum() - 1.0) > 1e-9:
            raise InputError("ideal force distribution must be 4 nonnegative fractions summing to 1")
        if not self.accel_variance_floor < self.accel_variance_ceiling:
            raise InputError("accel variance floor must be below the ceiling")
        if not self.deviation_ceiling > 0:
            raise InputError("deviation ceiling must be positive")


def accel_instability(imu_accel) -> float:
    """Mean per-axis variance of gravity-scaled, window-centered acceleration."""
    a = np.asarray(imu_accel, dtype=float)
    a = a[:, 1:4] if a.shape[1] == 4 else a
    if len(a) == 0:
        raise InputError("accelerometer series is empty")
    z = (a - a.mean(axis=0)) / GRAVITY
    return float(z.var(axis=0).mean())


def force_fractions(tactile) -> np.ndarray:
    f = np.asarray(tactile, dtype=float)
    f = f[:, 1:5] if f.shape[1] == 5 else f
    if len(f) == 0:
        raise InputError("tactile series is empty")
    total = f.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        raise InputError("tactile frame with zero total force: no ground contact")
    return f / total


def tactile_deviation(tactile, ideal) -> float:
    """Time-mean L1 distance of force fractions from the balanced state."""
    return float(np.abs(force_fractions(tactile) - np.asarray(ideal)).sum(axis=1).mean())


def traversability_score(imu_accel, tactile, calibration: TraversabilityCalibration) -> float:
    """Frame traversability in [0, 1]; 1 means stable, easy ground."""
    cal = calibration
    v = accel_instability(imu_accel)
    v_hat = np.clip((v - cal.accel_variance_floor) / (cal.accel_variance_ceiling - cal.accel_variance_floor), 0, 1)
    d = tactile_deviation(tactile, cal.ideal_force_distribution)
    d_hat = np.clip(d / cal.deviation_ceiling, 0, 1)
    return float(1.0 - v_hat * d_hat)


def calibrate(calm_imu, calm_tactile, rough_imu, rough_tactile, headroom: float = 1.25) -> TraversabilityCalibration:
    """Floor and ideal from a calm recording, ceilings from a rough one."""
    ideal = force_fractions(calm_tactile).mean(axis=0)
    ideal = ideal / ideal.sum()
    floor = accel_instability(calm_imu)
    ceiling = max(headroom * accel_instability(rough_imu), floor * (1 + 1e-9) + 1e-12)
    dev = headroom * tactile_deviation(rough_tactile, ideal)
    return TraversabilityCalibration(tuple(float(x) for x in ideal), floor, ceiling, max(dev, 1e-12))


@lru_cache(maxsize=1)
def default_calibration() -> TraversabilityCalibration:
    """Calibration from fixed synthetic concrete (calm) and mud (rough) walks."""
    seconds = 10.0
    return calibrate(
        synth_imu("concrete", seconds, seed=1001),
        synth_tactile("concrete", 0.0, seconds, seed=1002),
        synth_imu("mud", seconds, seed=1003),
        synth_tactile("mud", 0.0, seconds, seed=1004),
    )


@dataclass(frozen=True)
class LabelConfig:
    n_free: int = 4
    n_neg: int = 2
    max_neg_depth: float = 0.5
    decay_k: float = 5.0
    leaf_size: int = 30
    calibration: TraversabilityCalibration = field(default_factory=default_calibration)


def label_frame(frame: Frame, config: LabelConfig = LabelConfig(), table=DEFAULT_SEMANTICS):
    """All ray samples of a frame plus its scalar traversability score."""
    cloud = frame.cloud
    if len(cloud) == 0:
        raise InputError("cannot label a frame with an empty cloud")
    index = build_surface_index(cloud, config.leaf_size)
    hits = np.asarray(cloud.positions, dtype=float)
    origin = np.asarray(cloud.sensor_origin, dtype=float)
    positions, kinds = sample_rays(origin, hits, config.n_free, config.n_neg, config.max_neg_depth)
    kinds = np.tile(kinds, len(hits))
    samples = assign_sdf_confidence(positions, kinds, index, cloud, config.decay_k, table)
    score = traversability_score(frame.imu_accel, frame.tactile, config.calibration)
    return as_float32(samples), score


def as_float32(samples: QuerySamples) -> QuerySamples:
    """Storage precision; labels are persisted and trained on as f32."""
    return QuerySamples(
        samples.positions.astype(np.float32),
        samples.sdf.astype(np.float32),
        samples.confidence.astype(np.float32),
        samples.color_bins.astype(np.int64),
        samples.semantic_ids.astype(np.int64),
        samples.kinds.astype(np.int8),
    )
