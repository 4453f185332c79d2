"""Frame preparation, the deterministic trainer and dense field queries."""

from __future__ import annotations

import contextlib
import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import MelConfig, frame_mel_stack
from .errors import InputError, NumericError
from .labeling import LabelConfig, label_frame
from .model import (
    LOSS_TERMS,
    Batch,
    FieldModel,
    LossBreakdown,
    LossConfig,
    ModelConfig,
    breakdown,
    loss_terms,
)
from .scene import Frame, FieldPrediction, QuerySamples

log = logging.getLogger(__name__)


@contextlib.contextmanager
def flush_denormals():
    """Flush subnormal floats to zero; the steep softplus produces many and they stall CPU GEMMs."""
    torch.set_flush_denormal(True)
    try:
        yield
    finally:
        torch.set_flush_denormal(False)


@dataclass(eq=False)
class PreparedFrame:
    """Network-ready inputs and labels of one frame."""

    frame_id: int
    cloud: np.ndarray  # (N, 6) float32
    mel: np.ndarray  # (4, n_mels, T) float32
    samples: QuerySamples
    traversability: float
    robot_pose: np.ndarray


def prepare_frame(frame: Frame, label_config: LabelConfig = LabelConfig(),
                  mel_config: MelConfig = MelConfig(), samples=None, traversability=None) -> PreparedFrame:
    from .model import cloud_input

    if samples is None or traversability is None:
        samples, traversability = label_frame(frame, label_config)
    mel_config = mel_config if mel_config.sample_rate == frame.sample_rate else \
        MelConfig(**{**mel_config.__dict__, "sample_rate": frame.sample_rate})
    return PreparedFrame(
        frame.id,
        cloud_input(frame.cloud.positions, frame.cloud.colors_lab),
        frame_mel_stack(frame.audio, mel_config).astype(np.float32),
        samples,
        float(traversability),
        np.asarray(frame.robot_pose, dtype=float),
    )


def _stack_clouds(clouds) -> np.ndarray:
    # Cyclic repetition pads to a common size; max pooling ignores duplicates.
    n = max(len(c) for c in clouds)
    return np.stack([np.resize(c, (n, c.shape[1])) for c in clouds])


def make_batch(frames, sample_index, dtype=torch.float32) -> Batch:
    """Batch from a list of prepared frames and one index array per frame."""
    pos, fi = [], []
    sdf, conf, bins, sem = [], [], [], []
    for k, (frame, idx) in enumerate(zip(frames, sample_index)):
        s = frame.samples
        pos.append(s.positions[idx])
        fi.append(np.full(len(idx), k))
        sdf.append(s.sdf[idx])
        conf.append(s.confidence[idx])
        bins.append(s.color_bins[idx])
        sem.append(s.semantic_ids[idx])
    t = lambda a, dt=dtype: torch.as_tensor(np.ascontiguousarray(np.concatenate(a)), dtype=dt)
    return Batch(
        cloud=torch.as_tensor(_stack_clouds([f.cloud for f in frames]), dtype=dtype),
        mel=torch.as_tensor(np.stack([f.mel for f in frames]), dtype=dtype),
        query=t(pos),
        frame_index=t(fi, torch.long),
        sdf=t(sdf),
        confidence=t(conf),
        color_bins=t(bins, torch.long),
        semantic=t(sem, torch.long),
        traversability=torch.as_tensor([f.traversability for f in frames], dtype=dtype),
    )


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_queries: int = 1024
    frames_per_step: int = 2
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    eval_every: int = 100
    val_queries: int = 4096
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_queries <= 0 or self.frames_per_step <= 0:
            raise InputError("batch sizes must be positive")
        if any(lam < 0 for lam in self.loss.lambdas):
            raise InputError("loss weights must be nonnegative")


@dataclass
class TrainResult:
    model: FieldModel
    log: list  # LossBreakdown per step
    val_log: list  # (step, LossBreakdown)
    best_step: int


def _sample_indices(rng, frames, n_queries):
    per = np.full(len(frames), n_queries // len(frames))
    per[: n_queries % len(frames)] += 1
    return [np.sort(rng.choice(len(f.samples), size=min(k, len(f.samples)), replace=False))
            for f, k in zip(frames, per)]


def evaluate_loss(model: FieldModel, frames, sample_index, config: LossConfig) -> LossBreakdown:
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    terms = loss_terms(model, make_batch(frames, sample_index, dtype), config, create_graph=False)
    model.train(was_training)
    return breakdown(terms)


def train(train_frames, config: TrainConfig = TrainConfig(), val_frames=None,
          model_config: ModelConfig = ModelConfig(), model: FieldModel | None = None,
          callback=None) -> TrainResult:
    """Fit the field with Adam; returns the parameters with the best validation loss.

    Deterministic for a fixed ``config.seed``: frame and query selection come
    from a seeded generator and torch's RNG (dropout, init) is reseeded.
    """
    train_frames = list(train_frames)
    if not train_frames:
        raise InputError("training split is empty")
    with flush_denormals():
        return _train(train_frames, config, val_frames, model_config, model, callback)


def _train(train_frames, config, val_frames, model_config, model, callback) -> TrainResult:
    torch.manual_seed(config.seed)
    model = FieldModel(model_config, seed=config.seed) if model is None else model
    dtype = next(model.parameters()).dtype
    opt = torch.optim.Adam(model.parameters(), lr=config.learning_rate,
                           betas=tuple(config.adam_betas), eps=config.adam_eps, fused=True)
    rng = np.random.default_rng(config.seed)
    val_frames = list(val_frames) if val_frames else train_frames
    val_index = _sample_indices(np.random.default_rng(config.seed + 1), val_frames, config.val_queries)

    history, val_log = [], []
    best = (np.inf, 0, copy.deepcopy(model.state_dict()))
    n_pick = min(config.frames_per_step, len(train_frames))
    model.train()
    for step in range(config.steps):
        chosen = sorted(rng.choice(len(train_frames), size=n_pick, replace=False))
        frames = [train_frames[i] for i in chosen]
        batch = make_batch(frames, _sample_indices(rng, frames, config.batch_queries), dtype)
        terms = loss_terms(model, batch, config.loss)
        if not torch.isfinite(terms["total"]):
            raise NumericError(f"loss diverged at step {step}: {breakdown(terms)}")
        opt.zero_grad(set_to_none=True)
        terms["total"].backward()
        opt.step()
        history.append(breakdown(terms))
        last = step == config.steps - 1
        if config.eval_every and ((step + 1) % config.eval_every == 0 or last):
            val = evaluate_loss(model, val_frames, val_index, config.loss)
            val_log.append((step + 1, val))
            if val.total < best[0]:
                best = (val.total, step + 1, copy.deepcopy(model.state_dict()))
            log.debug("step %d train %.5f val %.5f", step + 1, history[-1].total, val.total)
        if callback is not None:
            callback(step, history[-1])
    if config.eval_every:
        model.load_state_dict(best[2])
    model.eval()
    return TrainResult(model, history, val_log, best[1] if config.eval_every else config.steps)


@torch.no_grad()
def encode_frame(model: FieldModel, frame: PreparedFrame):
    dtype = next(model.parameters()).dtype
    return model.encode(torch.as_tensor(frame.cloud, dtype=dtype)[None],
                        torch.as_tensor(frame.mel, dtype=dtype)[None])


def predict(model: FieldModel, frame: PreparedFrame, positions, chunk: int = 16384, feats=None) -> FieldPrediction:
    """Head outputs at arbitrary world positions for one frame."""
    model.eval()
    dtype = next(model.parameters()).dtype
    feats = encode_frame(model, frame) if feats is None else feats
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    parts = {"sdf": [], "confidence": [], "color_logits": [], "semantic_logits": []}
    with torch.no_grad(), flush_denormals():
        for start in range(0, len(positions), chunk):
            q = torch.as_tensor(positions[start:start + chunk], dtype=dtype)
            out = model.query(feats, q, torch.zeros(len(q), dtype=torch.long))
            for key in parts:
                parts[key].append(out[key].double().numpy())
        trav = float(model.traversability(feats)[0])
    cat = {k: (np.concatenate(v) if v else np.zeros((0,))) for k, v in parts.items()}
    return FieldPrediction(cat["sdf"], cat["confidence"], cat["color_logits"], cat["semantic_logits"], trav)


@dataclass(eq=False)
class GridPrediction:
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    sdf: np.ndarray  # (nx, ny, nz)
    confidence: np.ndarray
    semantic: np.ndarray  # argmax ids incl. NULL
    semantic_logits: np.ndarray  # (nx, ny, nz, n_classes + 1)
    color_bins: np.ndarray  # (nx, ny, nz, 3)
    traversability: float


def grid_axes(bounds, resolution):
    (x0, x1), (y0, y1), (z0, z1) = bounds
    if np.isscalar(resolution):
        resolution = (resolution,) * 3
    nx, ny, nz = (int(r) for r in resolution)
    return np.linspace(x0, x1, nx), np.linspace(y0, y1, ny), np.linspace(z0, z1, nz)


def query_grid(model: FieldModel, frame: PreparedFrame, bounds, resolution, axes=None) -> GridPrediction:
    """Dense field over an axis-aligned box; the frame is encoded exactly once."""
    xs, ys, zs = grid_axes(bounds, resolution) if axes is None else axes
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    feats = encode_frame(model, frame)
    pred = predict(model, frame, np.column_stack([X.ravel(), Y.ravel(), Z.ravel()]), feats=feats)
    shape = X.shape
    return GridPrediction(
        xs, ys, zs,
        pred.sdf.reshape(shape),
        pred.confidence.reshape(shape),
        pred.semantic_ids.reshape(shape),
        pred.semantic_logits.reshape(shape + (-1,)),
        pred.color_bins.reshape(shape + (3,)),
        pred.traversability,
    )
