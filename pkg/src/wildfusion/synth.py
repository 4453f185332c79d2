"""Procedural scenes with an exact SDF oracle and simulated sensor streams.

A scene is a sinusoidal heightfield carpeted with Voronoi terrain patches,
plus analytic solids (rocks, trees, logs, vegetation blocks). Everything is a
pure function of ``(seed, config)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError
from .scene import (
    DEFAULT_SEMANTICS,
    N_LEGS,
    TERRAIN_CLASSES,
    Frame,
    PointCloud,
    SemanticTable,
)

GRAVITY = 9.80665
AUDIO_SAMPLE_RATE = 16384
ROBOT_MASS_KG = 15.0
IDEAL_FORCE_FRACTIONS = (0.27, 0.27, 0.23, 0.23)
NOMINAL_SPEED = 0.4
SPLIT_RATIOS = (0.835, 0.09, 0.075)

# Accelerometer noise std (m/s^2); ordering concrete < grass < gravel < leaves < vegetation < mud.
ROUGHNESS = {
    "concrete": 0.10,
    "grass": 0.45,
    "gravel": 0.80,
    "leaves": 1.05,
    "vegetation": 1.40,
    "mud": 2.00,
}

# Contact-microphone signature per terrain: resonance (Hz), decay (s), noise band (Hz), gain.
AUDIO_SIGNATURES = {
    "concrete": (2600.0, 0.008, (2100.0, 3300.0), 1.0),
    "gravel": (5400.0, 0.020, (4300.0, 7200.0), 0.8),
    "grass": (320.0, 0.030, (180.0, 520.0), 0.5),
    "leaves": (1500.0, 0.025, (1050.0, 2000.0), 0.6),
    "vegetation": (780.0, 0.035, (560.0, 980.0), 0.5),
    "mud": (95.0, 0.060, (45.0, 150.0), 0.7),
}


@dataclass(frozen=True)
class Primitive:
    shape: str  # "sphere" | "cylinder" | "box"
    center: tuple
    dims: tuple  # sphere: (r,), cylinder: (r, half_height), box: half extents
    semantic_id: int
    color_lab: tuple


@dataclass(frozen=True)
class SceneConfig:
    extent: tuple = (-12.0, 12.0, -12.0, 12.0)
    n_rocks: int = 4
    n_trees: int = 8
    n_logs: int = 2
    n_bushes: int = 2
    n_patches: int = 10
    terrain_classes: tuple = TERRAIN_CLASSES
    n_waves: int = 3
    max_slope: float = 0.3
    max_amplitude: float = 0.15
    clear_band: float = 1.2
    flat: bool = False


@dataclass(frozen=True, eq=False)
class Scene:
    waves: np.ndarray  # (K, 4): amplitude, wavelength, direction, phase
    primitives: tuple
    patch_centers: np.ndarray  # (P, 2)
    patch_classes: np.ndarray  # (P,) semantic ids
    seed: int
    config: SceneConfig = field(default_factory=SceneConfig)
    table: SemanticTable = DEFAULT_SEMANTICS

    def same_as(self, other: "Scene") -> bool:
        return (
            self.seed == other.seed
            and self.primitives == other.primitives
            and np.array_equal(self.waves, other.waves)
            and np.array_equal(self.patch_centers, other.patch_centers)
            and np.array_equal(self.patch_classes, other.patch_classes)
        )


@dataclass(frozen=True)
class LidarPattern:
    n_rays: int = 2700
    mode: str = "rosette"  # or "uniform"
    fov_deg: float = 70.4
    pitch_deg: float = -25.0
    rate_a: float = 0.3819660112501051  # 1 / golden ratio^2
    rate_b: float = 0.41421356237309515  # sqrt(2) - 1
    range_noise_sigma: float = 0.0
    max_range: float = 20.0
    max_steps: int = 128
    tolerance: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.n_rays <= 0:
            raise ConfigError("lidar n_rays must be positive")
        if self.range_noise_sigma < 0:
            raise ConfigError("lidar range noise sigma must be nonnegative")
        if self.mode not in ("rosette", "uniform"):
            raise ConfigError(f"unknown lidar mode {self.mode!r}")


@dataclass(frozen=True)
class DatasetConfig:
    n_points: int = 2048
    lidar: LidarPattern = field(default_factory=LidarPattern)
    lidar_height: float = 0.6
    audio_seconds: float = 1.0
    gait_rate_hz: float = 2.0
    imu_rate_hz: float = 200.0
    accumulation_window: float = 2.0
    seed: int = 0


def generate_scene(seed: int, config: SceneConfig = SceneConfig(),
                   table: SemanticTable = DEFAULT_SEMANTICS) -> Scene:
    """Build a random scene; identical ``(seed, config)`` give identical scenes."""
    xmin, xmax, ymin, ymax = config.extent
    if not (xmax > xmin and ymax > ymin):
        raise ConfigError("scene extent must have positive area")
    if min(config.n_rocks, config.n_trees, config.n_logs, config.n_bushes) < 0:
        raise ConfigError("primitive counts must be nonnegative")
    if config.n_patches < 1:
        raise ConfigError("scene needs at least one terrain patch")
    if config.max_slope < 0 or config.max_amplitude < 0:
        raise ConfigError("heightfield limits must be nonnegative")
    rng = np.random.default_rng(seed)

    waves = np.zeros((0 if config.flat else config.n_waves, 4))
    if len(waves):
        wavelengths = rng.uniform(4.0, 12.0, config.n_waves)
        amplitudes = rng.uniform(0.3, 1.0, config.n_waves) * config.max_amplitude
        # Keep the worst-case gradient sum(2 pi A / lambda) under max_slope.
        slope = np.sum(2 * np.pi * amplitudes / wavelengths)
        if slope > config.max_slope:
            amplitudes *= config.max_slope / slope
        waves[:, 0] = amplitudes
        waves[:, 1] = wavelengths
        waves[:, 2] = rng.uniform(0, np.pi, config.n_waves)
        waves[:, 3] = rng.uniform(0, 2 * np.pi, config.n_waves)

    terrain_ids = np.array([table.id_of(name) for name in config.terrain_classes])
    centers = np.column_stack(
        [rng.uniform(xmin, xmax, config.n_patches), rng.uniform(ymin, ymax, config.n_patches)]
    )
    patch_classes = terrain_ids[rng.integers(0, len(terrain_ids), config.n_patches)]

    partial = Scene(waves, (), centers, patch_classes, seed, config, table)
    primitives = []
    footprints = []  # (x, y, radius) for overlap rejection

    def place(radius):
        for _ in range(200):
            x = rng.uniform(xmin + radius, xmax - radius) if xmax - xmin > 2 * radius else (xmin + xmax) / 2
            y = rng.uniform(ymin + radius, ymax - radius) if ymax - ymin > 2 * radius else (ymin + ymax) / 2
            if abs(y) < config.clear_band + radius:
                continue
            if all(math.hypot(x - fx, y - fy) > radius + fr + 0.2 for fx, fy, fr in footprints):
                footprints.append((x, y, radius))
                return x, y
        raise ConfigError("could not place all primitives; scene too crowded")

    def jitter_color(name):
        base = np.array(table.color_lut()[table.id_of(name)])
        return tuple(float(v) for v in np.round(base + rng.normal(0, 1.5, 3), 3))

    for _ in range(config.n_rocks):
        r = float(rng.uniform(0.3, 0.7))
        x, y = place(r)
        z = float(ground_height(partial, np.array([[x, y]]))[0]) + 0.3 * r
        primitives.append(Primitive("sphere", (x, y, z), (r,), table.id_of("rock"), jitter_color("rock")))
    for _ in range(config.n_trees):
        r = float(rng.uniform(0.15, 0.35))
        hh = float(rng.uniform(2.0, 3.5))
        x, y = place(r)
        z = float(ground_height(partial, np.array([[x, y]]))[0]) + hh - 0.5
        primitives.append(Primitive("cylinder", (x, y, z), (r, hh), table.id_of("tree"), jitter_color("tree")))
    for _ in range(config.n_logs):
        half = [float(rng.uniform(0.8, 1.5)), float(rng.uniform(0.15, 0.25)), float(rng.uniform(0.15, 0.25))]
        if rng.random() < 0.5:
            half[0], half[1] = half[1], half[0]
        x, y = place(math.hypot(half[0], half[1]))
        z = float(ground_height(partial, np.array([[x, y]]))[0]) + half[2] * 0.6
        primitives.append(Primitive("box", (x, y, z), tuple(half), table.id_of("log"), jitter_color("log")))
    for _ in range(config.n_bushes):
        half = (float(rng.uniform(0.4, 0.9)), float(rng.uniform(0.4, 0.9)), float(rng.uniform(0.25, 0.45)))
        x, y = place(math.hypot(half[0], half[1]))
        z = float(ground_height(partial, np.array([[x, y]]))[0]) + half[2] - 0.1
        primitives.append(Primitive("box", (x, y, z), half, table.id_of("vegetation"), jitter_color("vegetation")))

    return Scene(waves, tuple(primitives), centers, patch_classes, seed, config, table)


def ground_height(scene: Scene, xy) -> np.ndarray:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    h = np.zeros(len(xy))
    for amp, wl, theta, phase in scene.waves:
        s = xy[:, 0] * math.cos(theta) + xy[:, 1] * math.sin(theta)
        h += amp * np.sin(2 * np.pi * s / wl + phase)
    return h


def ground_gradient(scene: Scene, xy) -> np.ndarray:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    g = np.zeros((len(xy), 2))
    for amp, wl, theta, phase in scene.waves:
        s = xy[:, 0] * math.cos(theta) + xy[:, 1] * math.sin(theta)
        d = amp * 2 * np.pi / wl * np.cos(2 * np.pi * s / wl + phase)
        g[:, 0] += d * math.cos(theta)
        g[:, 1] += d * math.sin(theta)
    return g


def terrain_class_at(scene: Scene, xy) -> np.ndarray:
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    d2 = ((xy[:, None, :] - scene.patch_centers[None, :, :]) ** 2).sum(-1)
    return scene.patch_classes[np.argmin(d2, axis=1)]


def _primitive_sdf(prim: Primitive, p: np.ndarray) -> np.ndarray:
    c = np.asarray(prim.center)
    q = p - c
    if prim.shape == "sphere":
        return np.linalg.norm(q, axis=1) - prim.dims[0]
    if prim.shape == "cylinder":
        r, hh = prim.dims
        d = np.column_stack([np.hypot(q[:, 0], q[:, 1]) - r, np.abs(q[:, 2]) - hh])
        return np.minimum(d.max(axis=1), 0.0) + np.linalg.norm(np.maximum(d, 0.0), axis=1)
    if prim.shape == "box":
        d = np.abs(q) - np.asarray(prim.dims)
        return np.linalg.norm(np.maximum(d, 0.0), axis=1) + np.minimum(d.max(axis=1), 0.0)
    raise InputError(f"unknown primitive shape {prim.shape!r}")


def scene_components(scene: Scene, points) -> np.ndarray:
    """Per-component SDFs, shape ``(n_points, 1 + n_primitives)``; column 0 is ground."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    cols = [p[:, 2] - ground_height(scene, p[:, :2])]
    cols.extend(_primitive_sdf(prim, p) for prim in scene.primitives)
    return np.column_stack(cols)


def scene_sdf(scene: Scene, points) -> np.ndarray:
    """Signed distance to the scene (negative inside solids or below ground).

    Exact for the solids; the ground term is the vertical offset ``z - h(x, y)``.
    Accepts a single point or an ``(N, 3)`` array.
    """
    points = np.asarray(points, dtype=float)
    d = scene_components(scene, points).min(axis=1)
    return d[0] if points.ndim == 1 else d


def surface_attributes(scene: Scene, points, component: np.ndarray):
    """LAB color and semantic id of the component each point lies on."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    colors = np.empty((len(p), 3))
    ids = np.empty(len(p), dtype=np.int64)
    ground = component == 0
    if ground.any():
        cls = terrain_class_at(scene, p[ground, :2])
        ids[ground] = cls
        colors[ground] = scene.table.color_lut()[cls]
    for k, prim in enumerate(scene.primitives, start=1):
        m = component == k
        ids[m] = prim.semantic_id
        colors[m] = prim.color_lab
    return colors, ids


def _rotate_yaw(v: np.ndarray, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.column_stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1], v[:, 2]])


def ray_directions(pattern: LidarPattern, yaw: float = 0.0) -> np.ndarray:
    """Unit ray directions for one accumulation window, in world axes."""
    n = pattern.n_rays
    if pattern.mode == "uniform":
        rng = np.random.default_rng(pattern.seed)
        z = rng.uniform(-1.0, 1.0, n)
        phi = rng.uniform(0.0, 2 * np.pi, n)
        r = np.sqrt(1 - z**2)
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    # Two counter-rotating prisms with incommensurate rates trace a rosette.
    i = np.arange(n)
    a = 2 * np.pi * pattern.rate_a * i
    b = -2 * np.pi * pattern.rate_b * i * 7.0
    quarter = np.radians(pattern.fov_deg) / 4
    u = quarter * (np.cos(a) + np.cos(b))
    v = quarter * (np.sin(a) + np.sin(b))
    el = np.radians(pattern.pitch_deg) + v
    az = u
    d = np.column_stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])
    return _rotate_yaw(d, yaw)


def _trace_bound(scene: Scene, p: np.ndarray) -> np.ndarray:
    comps = scene_components(scene, p)
    # Vertical offset overestimates distance on slopes; shrink it to a bound.
    comps[:, 0] /= math.sqrt(1 + scene.config.max_slope**2)
    return comps.min(axis=1)


def sphere_trace(scene: Scene, origin, directions, max_range: float,
                 max_steps: int = 128, tolerance: float = 1e-4):
    """March rays through the scene SDF; returns ``(t, hit_mask)``."""
    origin = np.asarray(origin, dtype=float)
    d = np.asarray(directions, dtype=float)
    n = len(d)
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s = _trace_bound(scene, origin + t[idx, None] * d[idx])
        done = s < tolerance
        hit[idx[done]] = True
        t[idx[~done]] += s[~done]
        escaped = t[idx] > max_range
        active[idx[done | escaped]] = False
    return t, hit


def simulate_lidar(scene: Scene, pose, pattern: LidarPattern = LidarPattern(),
                   rng: np.random.Generator | None = None, sensor_height: float = 0.6) -> PointCloud:
    """Cast one accumulation window of rays from a robot pose ``(x, y, z?, yaw)``.

    The sensor sits ``sensor_height`` above the ground under the robot when the
    pose has 3 entries ``(x, y, yaw)``; a 4-entry pose gives the sensor origin
    explicitly as ``(x, y, z, yaw)``.
    """
    pose = np.asarray(pose, dtype=float)
    if pose.shape == (3,):
        z = ground_height(scene, pose[None, :2])[0] + sensor_height
        origin = np.array([pose[0], pose[1], z])
        yaw = pose[2]
    elif pose.shape == (4,):
        origin, yaw = pose[:3], pose[3]
    else:
        raise InputError("pose must be (x, y, yaw) or (x, y, z, yaw)")
    if scene_sdf(scene, origin) <= 0:
        raise InputError("sensor origin lies inside a solid or below ground")
    d = ray_directions(pattern, yaw)
    t, hit = sphere_trace(scene, origin, d, pattern.max_range, pattern.max_steps, pattern.tolerance)
    keep = hit & (t <= pattern.max_range)
    d, t = d[keep], t[keep]
    exact = origin + t[:, None] * d
    component = np.argmin(scene_components(scene, exact), axis=1)
    colors, ids = surface_attributes(scene, exact, component)
    if pattern.range_noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(pattern.seed)
        t = t + rng.normal(0.0, pattern.range_noise_sigma, len(t))
    positions = origin + t[:, None] * d
    return PointCloud(positions, colors, ids, origin)


def _terrain_name(terrain_class) -> str:
    name = terrain_class if isinstance(terrain_class, str) else None
    if name is None:
        try:
            name = DEFAULT_SEMANTICS.entries[int(terrain_class)].name
        except (IndexError, ValueError, TypeError):
            raise InputError(f"unknown terrain class {terrain_class!r}") from None
    if name not in AUDIO_SIGNATURES:
        raise InputError(f"unknown terrain class {terrain_class!r}")
    return name


def _band_limit(x, sr, lo, hi):
    spectrum = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spectrum, len(x))


def synth_audio(terrain_class, duration_s: float, gait_rate_hz: float = 2.0, seed: int = 0,
                sample_rate: int = AUDIO_SAMPLE_RATE) -> np.ndarray:
    """Contact-microphone waveform for one leg.

    Footstep impulses at the gait rate excite a decaying terrain resonance on
    top of stationary rubbing noise; the sum is confined to the terrain's band.
    """
    name = _terrain_name(terrain_class)
    if duration_s <= 0:
        raise InputError("duration must be positive")
    freq, decay, (lo, hi), gain = AUDIO_SIGNATURES[name]
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    period = 1.0 / gait_rate_hz
    impulses = np.zeros(n)
    times = np.arange(rng.uniform(0.02, 0.6 * period), duration_s, period)
    times = times + rng.normal(0, 0.01, len(times))
    for tk in times:
        k = int(round(tk * sample_rate))
        if 0 <= k < n:
            impulses[k] += rng.uniform(0.8, 1.2)
    kt = np.arange(int(6 * decay * sample_rate)) / sample_rate
    kernel = np.exp(-kt / decay) * np.sin(2 * np.pi * freq * kt)
    wave = 2.0 * np.convolve(impulses, kernel)[:n] + rng.normal(size=n)
    wave = _band_limit(wave, sample_rate, lo, hi)
    return gain * wave / (np.std(wave) + 1e-12)


def synth_imu(terrain_class, duration_s: float, seed: int = 0, rate_hz: float = 200.0,
              gait_rate_hz: float = 2.0, roughness: float | None = None) -> np.ndarray:
    """Accelerometer series ``(T, 4)``: time, ax, ay, az (gravity on +z)."""
    name = _terrain_name(terrain_class)
    if duration_s <= 0:
        raise InputError("duration must be positive")
    r = ROUGHNESS[name] if roughness is None else roughness
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration_s * rate_hz))) / rate_hz
    acc = np.zeros((len(t), 3))
    acc[:, 2] = GRAVITY + 0.15 * np.sin(2 * np.pi * 2 * gait_rate_hz * t)
    acc += r * rng.normal(size=acc.shape)
    return np.column_stack([t, acc])


def synth_tactile(terrain_class, slope: float, duration_s: float, seed: int = 0,
                  rate_hz: float = 200.0, roughness: float | None = None,
                  ideal=IDEAL_FORCE_FRACTIONS, mass_kg: float = ROBOT_MASS_KG) -> np.ndarray:
    """Foot-force series ``(T, 5)``: time then FL, FR, RL, RR forces in newtons."""
    name = _terrain_name(terrain_class)
    if duration_s <= 0:
        raise InputError("duration must be positive")
    r = ROUGHNESS[name] if roughness is None else roughness
    rng = np.random.default_rng(seed)
    t = np.arange(int(round(duration_s * rate_hz))) / rate_hz
    frac = np.tile(np.asarray(ideal, dtype=float), (len(t), 1))
    if r > 0:
        noise = rng.normal(size=frac.shape) * 0.04 * r
        frac = frac + noise - noise.mean(axis=1, keepdims=True)
    if slope != 0:
        # Uphill loads the rear legs.
        frac = frac + 0.5 * slope * np.array([-0.5, -0.5, 0.5, 0.5])
    if r > 0 or slope != 0:
        frac = np.clip(frac, 0.0, None)
        frac /= frac.sum(axis=1, keepdims=True)
    return np.column_stack([t, mass_kg * GRAVITY * frac])


def straight_trajectory(n: int, start=(-6.0, 0.0), yaw: float = 0.0, speed: float = NOMINAL_SPEED,
                        window: float = 2.0, x_limits=(-9.0, 9.0)) -> np.ndarray:
    """Poses ``(x, y, yaw)`` at ``speed * window`` spacing, turning back at the limits."""
    if n <= 0:
        raise InputError("trajectory must have at least one pose")
    step = speed * window
    poses = []
    x, y = start
    direction = 1.0 if math.cos(yaw) >= 0 else -1.0
    for _ in range(n):
        poses.append((x, y, 0.0 if direction > 0 else math.pi))
        nx = x + direction * step
        if not x_limits[0] <= nx <= x_limits[1]:
            direction = -direction
            nx = x + direction * step
        x = nx
    return np.array(poses)


def perturb_poses(poses, seed: int, xy_sigma: float = 0.3, yaw_sigma_deg: float = 15.0,
                  max_offset: float = 0.8) -> np.ndarray:
    """Nearby novel viewpoints of the given poses."""
    rng = np.random.default_rng(seed)
    poses = np.array(poses, dtype=float)
    poses[:, :2] += np.clip(rng.normal(0, xy_sigma, (len(poses), 2)), -max_offset, max_offset)
    poses[:, 2] += np.radians(rng.normal(0, yaw_sigma_deg, len(poses)))
    return poses


def split_counts(n: int, ratios=SPLIT_RATIOS) -> tuple:
    """Largest-remainder apportionment of ``n`` frames; ties favour later splits.

    ``split_counts(551)`` reproduces 460/50/41 and ``split_counts(100)`` 83/9/8.
    """
    quotas = [n * r for r in ratios]
    counts = [int(math.floor(q)) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), -i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return tuple(counts)


def _frame_seeds(dataset_seed: int, frame_id: int) -> list:
    return np.random.SeedSequence([dataset_seed, frame_id]).generate_state(4 + 2 * N_LEGS).tolist()


def make_frame(scene: Scene, pose, frame_id: int, config: DatasetConfig = DatasetConfig()) -> Frame:
    pose = np.asarray(pose, dtype=float)
    seeds = _frame_seeds(config.seed, frame_id)
    ground = ground_height(scene, pose[None, :2])[0]
    body = np.array([pose[0], pose[1], ground + config.lidar_height, pose[2]])
    cloud = simulate_lidar(scene, body, config.lidar, rng=np.random.default_rng(seeds[0]))
    if len(cloud) > config.n_points:
        keep = slice(0, config.n_points)
        cloud = PointCloud(cloud.positions[keep], cloud.colors_lab[keep],
                           cloud.semantic_ids[keep], cloud.sensor_origin)
    cloud = PointCloud(
        cloud.positions.astype(np.float32),
        cloud.colors_lab.astype(np.float32),
        cloud.semantic_ids.astype(np.int64),
        cloud.sensor_origin.astype(np.float32),
    )
    terrain = int(terrain_class_at(scene, pose[None, :2])[0])
    grad = ground_gradient(scene, pose[None, :2])[0]
    slope = float(grad[0] * math.cos(pose[2]) + grad[1] * math.sin(pose[2]))
    audio = [
        synth_audio(terrain, config.audio_seconds, config.gait_rate_hz, seeds[4 + leg]).astype(np.float32)
        for leg in range(N_LEGS)
    ]
    imu = synth_imu(terrain, config.accumulation_window, seeds[1], config.imu_rate_hz, config.gait_rate_hz)
    tactile = synth_tactile(terrain, slope, config.accumulation_window, seeds[2], config.imu_rate_hz)
    return Frame(
        id=int(frame_id),
        cloud=cloud,
        audio=audio,
        sample_rate=AUDIO_SAMPLE_RATE,
        imu_accel=imu.astype(np.float32),
        tactile=tactile.astype(np.float32),
        robot_pose=body.astype(np.float32),
        accumulation_window=float(config.accumulation_window),
    )


def make_dataset(scene: Scene, trajectory, config: DatasetConfig = DatasetConfig(),
                 first_id: int = 0) -> list:
    """One :class:`Frame` per trajectory pose ``(x, y, yaw)``."""
    trajectory = np.asarray(trajectory, dtype=float)
    if trajectory.ndim != 2 or len(trajectory) == 0:
        raise InputError("trajectory must be a nonempty (n, 3) array of poses")
    return [make_frame(scene, pose, first_id + i, config) for i, pose in enumerate(trajectory)]


def corridor_scene(vegetation_height: float = 0.45, corridor_width: float = 1.6,
                   wall_y=(-1.0, 1.0), extent=(-6.0, 6.0, -5.0, 5.0)) -> Scene:
    """Fixed regression scene: a rock wall spans the map except for a
    corridor filled with tall vegetation.

    The wall runs along ``x`` and occupies ``wall_y`` in ``y``; a robot south
    of it can only reach the north side through the vegetation.
    """
    table = DEFAULT_SEMANTICS
    rock, veg = table.id_of("rock"), table.id_of("vegetation")
    xmin, xmax, ymin, ymax = extent
    y0, y1 = wall_y
    half_w = corridor_width / 2
    wall_h = 0.6
    rock_color = tuple(table.color_lut()[rock])
    veg_color = tuple(table.color_lut()[veg])
    primitives = []
    left = (xmin - 1.0, -half_w)
    right = (half_w, xmax + 1.0)
    for a, b in (left, right):
        primitives.append(Primitive("box", ((a + b) / 2, (y0 + y1) / 2, wall_h),
                                    ((b - a) / 2, (y1 - y0) / 2, wall_h), rock, rock_color))
    primitives.append(Primitive("box", (0.0, (y0 + y1) / 2, vegetation_height / 2),
                                (half_w, (y1 - y0) / 2, vegetation_height / 2), veg, veg_color))
    config = SceneConfig(extent=extent, n_rocks=0, n_trees=0, n_logs=0, n_bushes=0,
                         n_patches=1, n_waves=0, flat=True, clear_band=0.0)
    centers = np.zeros((1, 2))
    classes = np.array([table.id_of("grass")])
    return Scene(np.zeros((0, 4)), tuple(primitives), centers, classes, 0, config, table)


def oracle_scene(sphere_radius: float = 0.8, trunk_radius: float = 0.4) -> Scene:
    """Fixed flat scene with one rock sphere and two tree cylinders.

    Every surface has an exact SDF, so labels can be checked against the
    oracle without the heightfield approximation.
    """
    table = DEFAULT_SEMANTICS
    rock, tree = table.id_of("rock"), table.id_of("tree")
    rock_color = tuple(table.color_lut()[rock])
    tree_color = tuple(table.color_lut()[tree])
    primitives = (
        Primitive("sphere", (3.0, 1.5, 0.3), (sphere_radius,), rock, rock_color),
        Primitive("cylinder", (4.0, -1.5, 1.0), (trunk_radius, 1.5), tree, tree_color),
        Primitive("cylinder", (6.0, 0.8, 1.0), (trunk_radius, 1.5), tree, tree_color),
    )
    config = SceneConfig(extent=(-2.0, 10.0, -5.0, 5.0), n_rocks=0, n_trees=0, n_logs=0, n_bushes=0,
                         n_patches=1, n_waves=0, flat=True, clear_band=0.0)
    return Scene(np.zeros((0, 4)), primitives, np.zeros((1, 2)), np.array([table.id_of("grass")]), 0, config, table)
