"""Pipeline configuration: TOML with dotted keys, strict schema, resolved dumps."""

from __future__ import annotations

import math
from pathlib import Path

import tomli

from .errors import ConfigError

# section.key -> default; the default's type is the accepted type.
DEFAULTS = {
    "scene.kind": "random",  # random | corridor
    "scene.seed": 0,
    "scene.unseen_seed": 1000,
    "scene.extent": [-12.0, 12.0, -12.0, 12.0],
    "scene.n_rocks": 4,
    "scene.n_trees": 8,
    "scene.n_logs": 2,
    "scene.n_bushes": 2,
    "scene.n_patches": 10,
    "scene.n_waves": 3,
    "scene.max_slope": 0.3,
    "scene.max_amplitude": 0.15,
    "scene.clear_band": 1.2,
    "scene.flat": False,
    "scene.corridor_vegetation_height": 0.45,
    "scene.corridor_width": 1.6,
    "dataset.seed": 0,
    "dataset.n_frames": 24,
    "dataset.start": [-6.0, 0.0],
    "dataset.n_points": 2048,
    "dataset.lidar_height": 0.6,
    "dataset.audio_seconds": 1.0,
    "dataset.gait_rate_hz": 2.0,
    "dataset.imu_rate_hz": 200.0,
    "dataset.accumulation_window": 2.0,
    "dataset.split_ratios": [0.835, 0.09, 0.075],
    "dataset.perturb_xy_sigma": 0.3,
    "dataset.perturb_yaw_sigma_deg": 15.0,
    "lidar.n_rays": 2700,
    "lidar.mode": "rosette",
    "lidar.fov_deg": 70.4,
    "lidar.pitch_deg": -25.0,
    "lidar.range_noise_sigma": 0.0,
    "lidar.max_range": 20.0,
    "lidar.max_steps": 128,
    "lidar.tolerance": 1e-4,
    "label.n_free": 4,
    "label.n_neg": 2,
    "label.max_neg_depth": 0.5,
    "label.decay_k": 5.0,
    "label.leaf_size": 30,
    "audio.n_fft": 2048,
    "audio.hop": 512,
    "audio.n_mels": 128,
    "audio.fmax": 8192.0,
    "audio.fmin": 0.0,
    "audio.segment_s": 0.5,
    "model.fourier_features": 64,
    "model.fourier_scale": 2.0,
    "model.include_input": True,
    "model.point_dims": [64, 128, 512],
    "model.tnet_dims": [64, 128],
    "model.audio_channels": [16, 32, 64],
    "model.audio_feature": 128,
    "model.trunk_width": 256,
    "model.head_width": 128,
    "model.trav_width": 64,
    "model.dropout": 0.1,
    "model.s_max": 3.0,
    "model.softplus_beta": 100.0,
    "train.seed": 0,
    "train.steps": 3000,
    "train.batch_queries": 1024,
    "train.frames_per_step": 2,
    "train.learning_rate": 1e-3,
    "train.beta1": 0.9,
    "train.beta2": 0.999,
    "train.eps": 1e-8,
    "train.eval_every": 100,
    "train.val_queries": 4096,
    "train.lambda1": 1.0,
    "train.lambda2": 0.01,
    "train.lambda3": 0.5,
    "train.lambda4": 1.0,
    "train.lambda5": 0.5,
    "train.lambda6": 1.0,
    "train.alpha": 0.5,
    "train.beta": 2.0,
    "train.huber_delta": 0.1,
    "train.head_sdf": True,
    "train.head_confidence": True,
    "train.head_semantic": True,
    "train.head_color": True,
    "train.head_traversability": True,
    "eval.pool": 30000,
    "eval.seed": 0,
    "eval.ece_bins": 10,
    "nav.cell_size": 0.1,
    "nav.half_width": 6.0,
    "nav.variance": 6.0,
    "nav.k": 10.0,
    "nav.tau": 0.1,
    "nav.k_e": 20.0,
    "nav.s0": 0.3,
    "nav.h_max": 0.25,
    "nav.mode": "blend",
    "nav.z_min": -0.5,
    # the field is only observed up to about the lidar height (0.6 m)
    "nav.z_max": 0.7,
    "nav.z_cells": 13,
    "export.z_slice": 0.3,
}

_CHOICES = {"scene.kind": ("random", "corridor"), "lidar.mode": ("rosette", "uniform"),
            "nav.mode": ("blend", "product")}
_POSITIVE = {"dataset.n_frames", "dataset.n_points", "lidar.n_rays", "lidar.max_range", "label.leaf_size",
             "train.steps", "train.batch_queries", "train.frames_per_step", "train.learning_rate",
             "eval.pool", "eval.ece_bins", "nav.cell_size", "nav.half_width", "nav.variance", "nav.z_cells",
             "model.s_max", "audio.n_fft", "audio.hop", "audio.n_mels", "label.decay_k"}
_NONNEGATIVE = {"label.n_free", "label.n_neg", "lidar.range_noise_sigma", "train.lambda1", "train.lambda2",
                "train.lambda3", "train.lambda4", "train.lambda5", "train.lambda6", "train.alpha",
                "train.beta", "model.dropout", "nav.k", "nav.k_e", "nav.h_max", "train.eval_every"}


class Config(dict):
    """Resolved flat configuration ``{"section.key": value}``."""

    def section(self, name: str) -> dict:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.items() if k.startswith(prefix)}


def _flatten(tree: dict, prefix: str = "") -> dict:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


def _coerce(key: str, value):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{key}: must be finite")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string, got {value!r}")
        if key in _CHOICES and value not in _CHOICES[key]:
            raise ConfigError(f"{key}: must be one of {_CHOICES[key]}, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{key}: expected a list of {len(default)} numbers")
        return [_coerce_item(key, default[0], v) for v in value]
    raise ConfigError(f"{key}: unsupported value {value!r}")


def _coerce_item(key, proto, v):
    if isinstance(proto, int) and not isinstance(proto, bool):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: list entries must be integers")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: list entries must be numbers")
    return float(v)


def _check_domain(cfg: Config):
    for key in _POSITIVE:
        if not cfg[key] > 0:
            raise ConfigError(f"{key}: must be positive, got {cfg[key]!r}")
    for key in _NONNEGATIVE:
        if cfg[key] < 0:
            raise ConfigError(f"{key}: must be nonnegative, got {cfg[key]!r}")
    ratios = cfg["dataset.split_ratios"]
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("dataset.split_ratios: must be nonnegative and sum to 1")
    if not 0 <= cfg["model.dropout"] < 1:
        raise ConfigError("model.dropout: must lie in [0, 1)")
    if not cfg["nav.z_min"] < cfg["nav.z_max"]:
        raise ConfigError("nav.z_min: must be below nav.z_max")
    x0, x1, y0, y1 = cfg["scene.extent"]
    if not (x0 < x1 and y0 < y1):
        raise ConfigError("scene.extent: need xmin < xmax and ymin < ymax")


def resolve(overrides: dict | None = None) -> Config:
    """Defaults updated by a (nested or flat) mapping; unknown keys are errors."""
    cfg = Config({k: list(v) if isinstance(v, list) else v for k, v in DEFAULTS.items()})
    for key, value in _flatten(overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value)
    _check_domain(cfg)
    return cfg


def parse_config(text: str) -> Config:
    try:
        tree = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}" if line is not None else "unknown line"
        raise ConfigError(f"config parse error at {where}: {getattr(exc, 'msg', exc)}") from exc
    return resolve(tree)


def load_config(path=None) -> Config:
    """Validated config from a file; ``None`` gives all defaults."""
    if path is None:
        return resolve()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    return str(v)


def dump_config(cfg: dict) -> str:
    """Every resolved key as ``section.key = value`` (valid TOML, parseable by :func:`parse_config`)."""
    return "".join(f"{k} = {_toml_value(cfg[k])}\n" for k in DEFAULTS)


def write_resolved(directory, cfg: dict, name: str = "config.resolved.toml") -> Path:
    path = Path(directory) / name
    path.write_text(dump_config(cfg))
    return path


def digest(cfg: dict) -> str:
    import hashlib

    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


# Builders for the typed configs of each module.

def scene_config(cfg: Config):
    from .synth import SceneConfig

    s = cfg.section("scene")
    return SceneConfig(extent=tuple(s["extent"]), n_rocks=s["n_rocks"], n_trees=s["n_trees"],
                       n_logs=s["n_logs"], n_bushes=s["n_bushes"], n_patches=s["n_patches"],
                       n_waves=s["n_waves"], max_slope=s["max_slope"], max_amplitude=s["max_amplitude"],
                       clear_band=s["clear_band"], flat=s["flat"])


def dataset_config(cfg: Config):
    from .synth import DatasetConfig, LidarPattern

    li, d = cfg.section("lidar"), cfg.section("dataset")
    lidar = LidarPattern(n_rays=li["n_rays"], mode=li["mode"], fov_deg=li["fov_deg"], pitch_deg=li["pitch_deg"],
                         range_noise_sigma=li["range_noise_sigma"], max_range=li["max_range"],
                         max_steps=li["max_steps"], tolerance=li["tolerance"], seed=d["seed"])
    return DatasetConfig(n_points=d["n_points"], lidar=lidar, lidar_height=d["lidar_height"],
                         audio_seconds=d["audio_seconds"], gait_rate_hz=d["gait_rate_hz"],
                         imu_rate_hz=d["imu_rate_hz"], accumulation_window=d["accumulation_window"],
                         seed=d["seed"])


def label_config(cfg: Config):
    from .labeling import LabelConfig

    s = cfg.section("label")
    return LabelConfig(n_free=s["n_free"], n_neg=s["n_neg"], max_neg_depth=s["max_neg_depth"],
                       decay_k=s["decay_k"], leaf_size=s["leaf_size"])


def mel_config(cfg: Config, sample_rate: int):
    from .audio import MelConfig

    s = cfg.section("audio")
    return MelConfig(n_fft=s["n_fft"], hop=s["hop"], n_mels=s["n_mels"], fmax=s["fmax"], fmin=s["fmin"],
                     sample_rate=int(sample_rate), segment_s=s["segment_s"])


def model_config(cfg: Config):
    from .model import ModelConfig

    s = cfg.section("model")
    return ModelConfig(fourier_features=s["fourier_features"], fourier_scale=s["fourier_scale"],
                       include_input=s["include_input"], point_dims=tuple(s["point_dims"]),
                       tnet_dims=tuple(s["tnet_dims"]), audio_channels=tuple(s["audio_channels"]),
                       audio_feature=s["audio_feature"], trunk_width=s["trunk_width"],
                       head_width=s["head_width"], trav_width=s["trav_width"], dropout=s["dropout"],
                       s_max=s["s_max"], softplus_beta=s["softplus_beta"])


def train_config(cfg: Config):
    from .model import HEADS, LossConfig
    from .training import TrainConfig

    s = cfg.section("train")
    loss = LossConfig(lambdas=tuple(s[f"lambda{i}"] for i in range(1, 7)), alpha=s["alpha"], beta=s["beta"],
                      huber_delta=s["huber_delta"], head_enable={h: s[f"head_{h}"] for h in HEADS})
    return TrainConfig(steps=s["steps"], batch_queries=s["batch_queries"], frames_per_step=s["frames_per_step"],
                       learning_rate=s["learning_rate"], adam_betas=(s["beta1"], s["beta2"]), adam_eps=s["eps"],
                       seed=s["seed"], eval_every=s["eval_every"], val_queries=s["val_queries"], loss=loss)


def eval_config(cfg: Config, heads=None):
    from .metrics import EvalConfig

    s = cfg.section("eval")
    kw = {} if heads is None else {"heads": tuple(heads)}
    return EvalConfig(pool=s["pool"], seed=s["seed"], ece_bins=s["ece_bins"], **kw)
