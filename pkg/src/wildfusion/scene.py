"""Shared domain types, CIELAB conversion and frame validation.

Point-like data is kept as struct-of-arrays: a cloud of N points is an
``(N, 3)`` position array plus parallel color and class arrays, never a list
of per-point objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

SURFACE_EPSILON = 1e-4
N_COLOR_BINS = 16
N_LEGS = 4
LEG_ORDER = ("front_left", "front_right", "rear_left", "rear_right")

KIND_SURFACE = 0
KIND_FREE = 1
KIND_NEGATIVE = 2
KIND_NAMES = {KIND_SURFACE: "surface", KIND_FREE: "free", KIND_NEGATIVE: "negative"}

# sRGB primaries -> XYZ, D65 white.
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_LAB_EPS = 216.0 / 24389.0
_LAB_KAPPA = 24389.0 / 27.0

LAB_MIN = np.array([0.0, -128.0, -128.0])
LAB_MAX = np.array([100.0, 127.0, 127.0])
LAB_SPAN = np.array([100.0, 255.0, 255.0])


@dataclass(frozen=True)
class SemanticClass:
    id: int
    name: str
    base_traversability: float
    base_color_lab: tuple


@dataclass(frozen=True)
class SemanticTable:
    """Dense class table; ``null_id`` (== number of classes) marks "no label"."""

    entries: tuple

    def __post_init__(self):
        for i, entry in enumerate(self.entries):
            if entry.id != i:
                raise InputError(f"semantic ids must be dense from 0, got {entry.id} at {i}")
            if not 0.0 <= entry.base_traversability <= 1.0:
                raise InputError(f"class {entry.name!r}: base traversability outside [0, 1]")

    @property
    def n_classes(self) -> int:
        return len(self.entries)

    @property
    def null_id(self) -> int:
        return len(self.entries)

    def id_of(self, name: str) -> int:
        for entry in self.entries:
            if entry.name == name:
                return entry.id
        raise InputError(f"unknown semantic class {name!r}")

    def traversability_lut(self) -> np.ndarray:
        """Per-id base traversability, with NULL mapped to 0."""
        return np.array([e.base_traversability for e in self.entries] + [0.0])

    def color_lut(self) -> np.ndarray:
        return np.array([e.base_color_lab for e in self.entries], dtype=float)


DEFAULT_SEMANTICS = SemanticTable(
    (
        SemanticClass(0, "concrete", 1.00, (70.0, 0.0, 3.0)),
        SemanticClass(1, "gravel", 0.85, (58.0, 3.0, 12.0)),
        SemanticClass(2, "grass", 0.80, (52.0, -42.0, 42.0)),
        SemanticClass(3, "leaves", 0.75, (42.0, 22.0, 38.0)),
        SemanticClass(4, "vegetation", 0.60, (36.0, -48.0, 24.0)),
        SemanticClass(5, "mud", 0.40, (28.0, 8.0, 16.0)),
        SemanticClass(6, "tree", 0.00, (32.0, 12.0, 20.0)),
        SemanticClass(7, "rock", 0.05, (60.0, -2.0, -8.0)),
        SemanticClass(8, "log", 0.05, (44.0, 16.0, 30.0)),
    )
)
TERRAIN_CLASSES = ("concrete", "gravel", "grass", "leaves", "vegetation", "mud")


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray  # (N, 3) meters
    colors_lab: np.ndarray  # (N, 3)
    semantic_ids: np.ndarray  # (N,)
    sensor_origin: np.ndarray  # (3,)

    def __len__(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class Frame:
    id: int
    cloud: PointCloud
    audio: list  # N_LEGS mono waveforms, LEG_ORDER
    sample_rate: int
    imu_accel: np.ndarray  # (T, 4): t, ax, ay, az in m/s^2
    tactile: np.ndarray  # (T, 5): t, f_fl, f_fr, f_rl, f_rr in newtons
    robot_pose: np.ndarray  # (4,): x, y, z, yaw
    accumulation_window: float = 2.0


@dataclass(frozen=True, eq=False)
class QuerySamples:
    """A batch of labeled query points.

    NULL color bins and NULL semantics are both stored as ``null_id``-style
    sentinels: color bins use ``N_COLOR_BINS`` per channel, semantics use the
    table's ``null_id``.
    """

    positions: np.ndarray  # (M, 3)
    sdf: np.ndarray  # (M,)
    confidence: np.ndarray  # (M,)
    color_bins: np.ndarray  # (M, 3) int, N_COLOR_BINS where NULL
    semantic_ids: np.ndarray  # (M,) int, null_id where NULL
    kinds: np.ndarray  # (M,) int8

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def color_valid(self) -> np.ndarray:
        return np.all(self.color_bins < N_COLOR_BINS, axis=1)

    def subset(self, index) -> "QuerySamples":
        return QuerySamples(
            self.positions[index],
            self.sdf[index],
            self.confidence[index],
            self.color_bins[index],
            self.semantic_ids[index],
            self.kinds[index],
        )

    @staticmethod
    def concatenate(parts) -> "QuerySamples":
        parts = list(parts)
        return QuerySamples(
            *(np.concatenate([getattr(p, f) for p in parts]) for f in
              ("positions", "sdf", "confidence", "color_bins", "semantic_ids", "kinds"))
        )


@dataclass(frozen=True, eq=False)
class FieldPrediction:
    sdf: np.ndarray
    confidence: np.ndarray
    color_logits: np.ndarray  # (M, 3, N_COLOR_BINS)
    semantic_logits: np.ndarray  # (M, n_classes + 1)
    traversability: float

    @property
    def semantic_ids(self) -> np.ndarray:
        return np.argmax(self.semantic_logits, axis=-1)

    @property
    def color_bins(self) -> np.ndarray:
        return np.argmax(self.color_logits, axis=-1)


def _check_rgb(rgb) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=float)
    if rgb.shape[-1] != 3:
        raise InputError("rgb must have a trailing dimension of 3")
    if np.any(rgb < 0) or np.any(rgb > 255) or not np.all(np.isfinite(rgb)):
        raise InputError("rgb components must lie in [0, 255]")
    return rgb


def _srgb_decode(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_encode(c):
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(np.maximum(c, 0.0), 1 / 2.4) - 0.055)


def rgb_to_lab(rgb) -> np.ndarray:
    """Convert 8-bit sRGB to CIELAB (D65). Accepts ``(..., 3)`` arrays."""
    rgb = _check_rgb(rgb)
    xyz = _srgb_decode(rgb / 255.0) @ _RGB_TO_XYZ.T
    t = xyz / _WHITE
    f = np.where(t > _LAB_EPS, np.cbrt(t), (_LAB_KAPPA * t + 16.0) / 116.0)
    L = np.where(t[..., 1] > _LAB_EPS, 116.0 * f[..., 1] - 16.0, _LAB_KAPPA * t[..., 1])
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab`, rounded to 8 bits.

    Returns ``(rgb, out_of_gamut)``; colors outside the sRGB cube are clamped
    and flagged.
    """
    lab = np.asarray(lab, dtype=float)
    L, a, b = lab[..., 0], lab[..., 1], lab[..., 2]
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f**3 > _LAB_EPS, f**3, (116.0 * f - 16.0) / _LAB_KAPPA)
    t[..., 1] = np.where(L > _LAB_KAPPA * _LAB_EPS, fy**3, L / _LAB_KAPPA)
    linear = (t * _WHITE) @ _XYZ_TO_RGB.T
    rgb = _srgb_encode(linear) * 255.0
    tol = 0.5
    out_of_gamut = np.any((rgb < -tol) | (rgb > 255.0 + tol), axis=-1)
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return rgb, out_of_gamut


def normalize_lab(lab) -> np.ndarray:
    """Affine map of LAB channel ranges onto [0, 1]^3."""
    return (np.asarray(lab, dtype=float) - LAB_MIN) / LAB_SPAN


def denormalize_lab(norm) -> np.ndarray:
    return np.asarray(norm, dtype=float) * LAB_SPAN + LAB_MIN


def lab_to_bins(lab, n_bins: int = N_COLOR_BINS) -> np.ndarray:
    norm = normalize_lab(lab)
    return np.clip(np.floor(norm * n_bins), 0, n_bins - 1).astype(np.int64)


def bin_centers(bins, n_bins: int = N_COLOR_BINS) -> np.ndarray:
    """Normalized LAB value at the center of each bin index."""
    return (np.asarray(bins, dtype=float) + 0.5) / n_bins


def validate_frame(frame: Frame, table: SemanticTable = DEFAULT_SEMANTICS) -> list:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    cloud = frame.cloud
    if len(frame.audio) != N_LEGS:
        problems.append(f"audio-channel-count: expected {N_LEGS} legs, got {len(frame.audio)}")
    for leg, wave in enumerate(frame.audio):
        wave = np.asarray(wave)
        if wave.ndim != 1 or wave.size == 0:
            problems.append(f"audio-empty: leg {leg} has no samples")
        elif not np.all(np.isfinite(wave)):
            problems.append(f"audio-nonfinite: leg {leg}")
    if frame.sample_rate <= 0:
        problems.append("sample-rate: must be positive")
    if len(cloud) == 0:
        problems.append("empty-cloud: observed frame has no points")
    else:
        if not np.all(np.isfinite(cloud.positions)):
            problems.append("cloud-nonfinite: point positions must be finite")
        lab = np.asarray(cloud.colors_lab, dtype=float)
        if np.any(lab < LAB_MIN) or np.any(lab > LAB_MAX):
            problems.append("color-range: LAB channel outside its range")
        ids = np.asarray(cloud.semantic_ids)
        if np.any(ids < 0) or np.any(ids > table.null_id):
            problems.append("semantic-id: index outside semantic table")
    if not np.all(np.isfinite(cloud.sensor_origin)):
        problems.append("sensor-origin: must be finite")
    for name, series, width in (("imu", frame.imu_accel, 4), ("tactile", frame.tactile, 5)):
        series = np.asarray(series)
        if series.ndim != 2 or series.shape[0] == 0 or series.shape[1] != width:
            problems.append(f"{name}-series: expected nonempty (T, {width}) series")
        elif not np.all(np.isfinite(series)):
            problems.append(f"{name}-nonfinite")
    if not frame.accumulation_window > 0:
        problems.append("accumulation-window: must be positive")
    if np.asarray(frame.robot_pose).shape != (4,):
        problems.append("robot-pose: expected (x, y, z, yaw)")
    return problems


def sample_violations(samples: QuerySamples, table: SemanticTable = DEFAULT_SEMANTICS,
                      surface_epsilon: float = SURFACE_EPSILON) -> list:
    """Check QuerySample kind/field invariants; returns ``(index, message)`` pairs."""
    out = []
    sdf, conf, kinds = samples.sdf, samples.confidence, samples.kinds
    color_null = np.all(samples.color_bins == N_COLOR_BINS, axis=1)
    color_partial = ~color_null & np.any(samples.color_bins >= N_COLOR_BINS, axis=1)
    sem_null = samples.semantic_ids == table.null_id

    def flag(mask, message):
        for i in np.flatnonzero(mask):
            out.append((int(i), message))

    flag(~np.isin(kinds, list(KIND_NAMES)), "unknown kind")
    flag(~np.all(np.isfinite(samples.positions), axis=1), "non-finite position")
    flag((conf < 0) | (conf > 1) | ~np.isfinite(conf), "confidence outside [0, 1]")
    flag((samples.semantic_ids < 0) | (samples.semantic_ids > table.null_id), "semantic id out of range")
    flag(color_partial | np.any(samples.color_bins < 0, axis=1), "malformed color bins")
    free = kinds == KIND_FREE
    flag(free & ~(sdf > 0), "free sample must have positive sdf")
    flag(free & (conf != 1.0), "free sample must have confidence 1")
    flag(free & ~color_null, "free sample must have NULL color")
    flag(free & ~sem_null, "free sample must have NULL semantics")
    neg = kinds == KIND_NEGATIVE
    flag(neg & ~(sdf < 0), "negative sample must have negative sdf")
    flag(neg & ~(conf > 0), "negative sample confidence must be in (0, 1]")
    flag((kinds == KIND_SURFACE) & (np.abs(sdf) > surface_epsilon), "surface sample off the surface")
    out.sort()
    return out
