"""Evaluation protocol: prediction filtering plus color, geometry, semantic and confidence metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .labeling import SurfaceIndex
from .scene import (
    DEFAULT_SEMANTICS,
    KIND_FREE,
    N_COLOR_BINS,
    FieldPrediction,
    QuerySamples,
    bin_centers,
)

EVAL_POOL = 30000
ECE_BINS = 10
METRIC_KEYS = {
    "color": ("mse", "mae", "psnr"),
    "geometry": ("hausdorff", "chamfer"),
    "semantic": ("accuracy", "precision", "recall", "f1", "iou"),
    "confidence": ("ece",),
}


def filter_valid(prediction: FieldPrediction, null_id: int = DEFAULT_SEMANTICS.null_id,
                 use_semantics: bool = True) -> np.ndarray:
    """Indices with predicted ``sdf <= 0`` and (optionally) a non-NULL semantic argmax."""
    keep = np.asarray(prediction.sdf) <= 0
    if use_semantics:
        keep &= prediction.semantic_ids != null_id
    return np.flatnonzero(keep)


def color_metrics(pred_bins, gt_bins, n_bins: int = N_COLOR_BINS):
    """MSE, MAE and PSNR (peak 1) of bin centers on normalized LAB; ``None`` when empty."""
    pred = np.asarray(pred_bins)
    gt = np.asarray(gt_bins)
    if pred.shape != gt.shape:
        raise InputError("color bin arrays are not aligned")
    if pred.size == 0:
        return None
    err = bin_centers(pred, n_bins) - bin_centers(gt, n_bins)
    return color_errors(err)


def color_errors(err):
    """Color metrics from per-channel errors on normalized values."""
    err = np.asarray(err, dtype=float)
    if err.size == 0:
        return None
    mse = float(np.mean(err**2))
    mae = float(np.mean(np.abs(err)))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(1.0 / mse)
    return {"mse": mse, "mae": mae, "psnr": psnr}


def _directed(a_index: SurfaceIndex, b):
    return a_index.nearest(b)[0]


def geometry_metrics(pred_points, gt_points):
    """Symmetric Hausdorff and Chamfer (mean of the two directed means); ``None`` when empty."""
    a = np.asarray(pred_points, dtype=float).reshape(-1, 3)
    b = np.asarray(gt_points, dtype=float).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        return None
    ab = _directed(SurfaceIndex(b), a)
    ba = _directed(SurfaceIndex(a), b)
    return {
        "hausdorff": float(max(ab.max(), ba.max())),
        "chamfer": float(0.5 * (ab.mean() + ba.mean())),
    }


def confusion_matrix(pred, gt, n_classes: int) -> np.ndarray:
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if np.any((pred < 0) | (pred >= n_classes)) or np.any((gt < 0) | (gt >= n_classes)):
        raise InputError(f"class ids must lie in [0, {n_classes})")
    return np.bincount(gt * n_classes + pred, minlength=n_classes**2).reshape(n_classes, n_classes)


def classification_metrics(pred_ids, gt_ids, n_classes: int):
    """Micro accuracy; macro precision/recall/F1 and mean IoU over classes present in gt."""
    pred = np.asarray(pred_ids)
    gt = np.asarray(gt_ids)
    if pred.shape != gt.shape:
        raise InputError("id arrays are not aligned")
    if pred.size == 0:
        return None
    cm = confusion_matrix(pred, gt, n_classes).astype(float)
    tp = np.diag(cm)
    gt_count = cm.sum(axis=1)
    pred_count = cm.sum(axis=0)
    present = gt_count > 0

    def ratio(num, den):
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    precision = ratio(tp, pred_count)
    recall = ratio(tp, gt_count)
    f1 = ratio(2 * precision * recall, precision + recall)
    iou = ratio(tp, gt_count + pred_count - tp)
    return {
        "accuracy": float(tp.sum() / cm.sum()),
        "precision": float(precision[present].mean()),
        "recall": float(recall[present].mean()),
        "f1": float(f1[present].mean()),
        "iou": float(iou[present].mean()),
    }


def per_class_iou(pred_ids, gt_ids, n_classes: int) -> dict:
    cm = confusion_matrix(pred_ids, gt_ids, n_classes).astype(float)
    tp = np.diag(cm)
    union = cm.sum(axis=0) + cm.sum(axis=1) - tp
    return {c: float(tp[c] / union[c]) for c in range(n_classes) if cm[c].sum() > 0}


def ece(pred_conf, gt_conf, n_bins: int = ECE_BINS):
    """Bin-weighted gap between mean predicted and mean target confidence; ``None`` when empty."""
    p = np.asarray(pred_conf, dtype=float).ravel()
    g = np.asarray(gt_conf, dtype=float).ravel()
    if p.shape != g.shape:
        raise InputError("confidence arrays are not aligned")
    if n_bins < 1:
        raise InputError("n_bins must be at least 1")
    if p.size == 0:
        return None
    if np.any((p < 0) | (p > 1)) or np.any((g < 0) | (g > 1)):
        raise InputError("confidences must lie in [0, 1]")
    b = np.minimum((p * n_bins).astype(np.int64), n_bins - 1)
    n = np.bincount(b, minlength=n_bins)
    gap = np.bincount(b, weights=p, minlength=n_bins) - np.bincount(b, weights=g, minlength=n_bins)
    # sum_b (n_b / N) |mean_p - mean_g| = sum_b |sum_p - sum_g| / N
    return float(np.abs(gap[n > 0]).sum() / p.size)


@dataclass
class EvalReport:
    color: dict | None
    geometry: dict | None
    semantic: dict | None
    confidence: dict | None
    n_samples_used: int
    split: str = "all"
    frames: list = field(default_factory=list)  # per-frame flat rows

    def flat(self) -> dict:
        """``group.metric`` keys in a fixed order; absent groups are ``None``."""
        out = {}
        for group, keys in METRIC_KEYS.items():
            values = getattr(self, group)
            for key in keys:
                out[f"{group}.{key}"] = None if values is None else values[key]
        out["n_samples_used"] = self.n_samples_used
        return out


@dataclass(frozen=True)
class EvalConfig:
    pool: int = EVAL_POOL
    seed: int = 0
    ece_bins: int = ECE_BINS
    heads: tuple = ("sdf", "confidence", "semantic", "color")


def evaluate_prediction(prediction: FieldPrediction, samples: QuerySamples, config: EvalConfig = EvalConfig(),
                        table=DEFAULT_SEMANTICS) -> dict:
    """Filtered metric inputs for one frame (the pieces pooled by :func:`evaluate`)."""
    use_sem = "semantic" in config.heads
    keep = filter_valid(prediction, table.null_id, use_sem)
    gt_surface = samples.positions[samples.kinds != KIND_FREE]
    parts = {"n": len(keep), "geometry": geometry_metrics(samples.positions[keep], gt_surface)}
    if "color" in config.heads:
        valid = keep[samples.color_valid[keep]]
        pred = bin_centers(prediction.color_bins[valid])
        gt = bin_centers(samples.color_bins[valid])
        parts["color_err"] = pred - gt
    if use_sem:
        parts["sem"] = (prediction.semantic_ids[keep], samples.semantic_ids[keep])
    if "confidence" in config.heads:
        parts["conf"] = (np.asarray(prediction.confidence)[keep], samples.confidence[keep])
    return parts


def _frame_row(frame_id, parts, config, n_classes) -> tuple:
    color = color_errors(parts["color_err"]) if "color_err" in parts else None
    semantic = classification_metrics(*parts["sem"], n_classes) if "sem" in parts else None
    conf = None
    if "conf" in parts:
        e = ece(*parts["conf"], config.ece_bins)
        conf = None if e is None else {"ece": e}
    return color, parts["geometry"], semantic, conf


def _report(split, per_frame, config, n_classes) -> EvalReport:
    rows = []
    for frame_id, parts in per_frame:
        color, geometry, semantic, conf = _frame_row(frame_id, parts, config, n_classes)
        row = EvalReport(color, geometry, semantic, conf, parts["n"], split).flat()
        rows.append({"split": split, "frame_id": frame_id, **row})
    allp = [p for _, p in per_frame]
    color = sem = conf = None
    if allp and "color_err" in allp[0]:
        color = color_errors(np.concatenate([p["color_err"] for p in allp]))
    if allp and "sem" in allp[0]:
        sem = classification_metrics(np.concatenate([p["sem"][0] for p in allp]),
                                     np.concatenate([p["sem"][1] for p in allp]), n_classes)
    if allp and "conf" in allp[0]:
        e = ece(np.concatenate([p["conf"][0] for p in allp]), np.concatenate([p["conf"][1] for p in allp]),
                config.ece_bins)
        conf = None if e is None else {"ece": e}
    geos = [p["geometry"] for p in allp if p["geometry"] is not None]
    geometry = {k: float(np.mean([g[k] for g in geos])) for k in METRIC_KEYS["geometry"]} if geos else None
    return EvalReport(color, geometry, sem, conf, int(sum(p["n"] for p in allp)), split, rows)


def pool_indices(n_samples: int, pool: int, rng) -> np.ndarray:
    if n_samples <= pool:
        return np.arange(n_samples)
    return np.sort(rng.choice(n_samples, size=pool, replace=False))


def evaluate(model, splits: dict, config: EvalConfig = EvalConfig(), table=DEFAULT_SEMANTICS) -> dict:
    """Reports per split plus ``"aggregate"`` over all splits.

    ``splits`` maps a split name to a list of prepared frames; each frame
    contributes at most ``config.pool`` of its labeled samples, drawn with a
    generator seeded from ``config.seed``.
    """
    from .training import predict

    return evaluate_with(lambda frame, samples: predict(model, frame, samples.positions), splits, config, table)


def evaluate_with(predictor, splits: dict, config: EvalConfig = EvalConfig(), table=DEFAULT_SEMANTICS) -> dict:
    """:func:`evaluate` with an arbitrary ``predictor(frame, samples) -> FieldPrediction``."""
    n_classes = table.n_classes + 1  # gt NULL on an occupied prediction counts as an error
    reports, everything = {}, []
    for s_i, (name, frames) in enumerate(splits.items()):
        per_frame = []
        for frame in frames:
            rng = np.random.default_rng([config.seed, s_i, int(frame.frame_id)])
            samples = frame.samples.subset(pool_indices(len(frame.samples), config.pool, rng))
            per_frame.append((frame.frame_id, evaluate_prediction(predictor(frame, samples), samples, config, table)))
        reports[name] = _report(name, per_frame, config, n_classes)
        everything.extend(per_frame)
    reports["aggregate"] = _report("aggregate", everything, config, n_classes)
    return reports


def prediction_from_samples(samples: QuerySamples, table=DEFAULT_SEMANTICS, traversability: float = 1.0,
                            s_max: float = 3.0) -> FieldPrediction:
    """Ground truth dressed as a prediction (one-hot logits); evaluates to a perfect report."""
    n = len(samples)
    sem = np.full((n, table.n_classes + 1), -1.0)
    sem[np.arange(n), samples.semantic_ids] = 1.0
    color = np.full((n, 3, N_COLOR_BINS), -1.0)
    bins = np.where(samples.color_valid[:, None], samples.color_bins, 0)
    color[np.arange(n)[:, None], np.arange(3)[None, :], bins] = 1.0
    return FieldPrediction(np.clip(samples.sdf, -s_max, s_max), samples.confidence.copy(), color, sem,
                           float(traversability))
