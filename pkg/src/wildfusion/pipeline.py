"""File-based pipeline stages: synth, label, train, eval, plan and export."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io, nav, synth
from .errors import InputError
from .labeling import label_frame
from .metrics import evaluate, evaluate_with, prediction_from_samples
from .scene import DEFAULT_SEMANTICS, bin_centers, denormalize_lab, lab_to_rgb
from .training import PreparedFrame, prepare_frame, query_grid, train

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
FRAMES_DIR = "frames"
LABELS_DIR = "labels"
CHECKPOINT = "checkpoint.wfld"


def _frame_file(fid: int) -> str:
    return f"{FRAMES_DIR}/frame_{fid:05d}.wfrm"


def _label_file(fid: int) -> str:
    return f"frame_{fid:05d}.wlbl"


def build_scene(cfg):
    if cfg["scene.kind"] == "corridor":
        x0, x1, y0, y1 = cfg["scene.extent"]
        return synth.corridor_scene(cfg["scene.corridor_vegetation_height"], cfg["scene.corridor_width"],
                                    extent=(x0, x1, y0, y1))
    return synth.generate_scene(cfg["scene.seed"], cfgmod.scene_config(cfg))


def split_layout(n: int, ratios) -> dict:
    """Split name per trajectory position: train/val along the walk, then the two test splits."""
    n_train, n_val, n_test = synth.split_counts(n, tuple(ratios))
    n_walk = n_train + n_val
    val_at = set(int(i) for i in np.floor((np.arange(n_val) + 0.5) * n_walk / n_val)) if n_val else set()
    walk = ["val" if i in val_at else "train" for i in range(n_walk)]
    n_seen = (n_test + 1) // 2
    return {"walk": walk, "seen": n_seen, "unseen": n_test - n_seen}


def make_split_frames(cfg):
    """``[(frame, split)]`` for the configured dataset, frame ids dense from 0."""
    scene = build_scene(cfg)
    dcfg = cfgmod.dataset_config(cfg)
    x0, x1, _, _ = cfg["scene.extent"]
    limits = (x0 + 1.5, x1 - 1.5)
    layout = split_layout(cfg["dataset.n_frames"], cfg["dataset.split_ratios"])
    walk = synth.straight_trajectory(len(layout["walk"]), tuple(cfg["dataset.start"]), x_limits=limits)
    out = [(synth.make_frame(scene, pose, i, dcfg), split) for i, (pose, split) in enumerate(zip(walk, layout["walk"]))]
    if layout["seen"]:
        pick = np.linspace(0, len(walk) - 1, layout["seen"]).round().astype(int)
        seen = synth.perturb_poses(walk[pick], cfg["dataset.seed"] + 1, cfg["dataset.perturb_xy_sigma"],
                                   cfg["dataset.perturb_yaw_sigma_deg"])
        out += [(synth.make_frame(scene, pose, len(out) + i, dcfg), "test-seen") for i, pose in enumerate(seen)]
    if layout["unseen"]:
        unseen_scene = synth.generate_scene(cfg["scene.unseen_seed"], cfgmod.scene_config(cfg))
        poses = synth.straight_trajectory(layout["unseen"], tuple(cfg["dataset.start"]), x_limits=limits)
        out += [(synth.make_frame(unseen_scene, pose, len(out) + i, dcfg), "test-unseen")
                for i, pose in enumerate(poses)]
    return out


def run_synth(cfg, out_dir) -> io.DatasetManifest:
    out = Path(out_dir)
    (out / FRAMES_DIR).mkdir(parents=True, exist_ok=True)
    entries = {}
    for frame, split in make_split_frames(cfg):
        name = _frame_file(frame.id)
        entries[str(frame.id)] = {"file": name, "sha256": io.write_frame(out / name, frame), "split": split}
    manifest = io.DatasetManifest(
        version=io.FORMAT_VERSION,
        scene_seed=cfg["scene.seed"],
        unseen_scene_seed=cfg["scene.unseen_seed"],
        config_digest=cfgmod.digest(cfg),
        frames=entries,
        sample_rate=synth.AUDIO_SAMPLE_RATE,
        constants={"n_points": cfg["dataset.n_points"], "accumulation_window": cfg["dataset.accumulation_window"],
                   "cell_size": cfg["nav.cell_size"], "n_mels": cfg["audio.n_mels"]},
    )
    io.write_manifest(out / MANIFEST, manifest)
    cfgmod.write_resolved(out, cfg)
    return manifest


def load_dataset(data_dir, verify: bool = True) -> io.DatasetManifest:
    manifest = io.read_manifest(Path(data_dir) / MANIFEST)
    problems = manifest.validate(data_dir if verify else None)
    if problems:
        raise InputError("dataset manifest check failed: " + "; ".join(problems))
    return manifest


def run_label(cfg, data_dir, out_dir) -> dict:
    manifest = load_dataset(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lcfg = cfgmod.label_config(cfg)
    scores = {}
    for fid in sorted(int(k) for k in manifest.frames):
        frame = io.read_frame(Path(data_dir) / manifest.frames[str(fid)]["file"])
        samples, score = label_frame(frame, lcfg)
        io.write_labels(out / _label_file(fid), samples, score)
        scores[fid] = score
    io.write_traversability_csv(out / "traversability.csv", scores)
    cfgmod.write_resolved(out, cfg)
    return scores


def load_prepared(cfg, data_dir, labels_dir, split) -> list:
    manifest = load_dataset(data_dir)
    frames = []
    for fid in manifest.split_ids(split):
        frame = io.read_frame(Path(data_dir) / manifest.frames[str(fid)]["file"])
        samples, score = io.read_labels(Path(labels_dir) / _label_file(fid))
        if math.isnan(score):
            raise InputError(f"labels of frame {fid} carry no traversability score")
        frames.append(prepare_frame(frame, mel_config=cfgmod.mel_config(cfg, frame.sample_rate),
                                    samples=samples, traversability=score))
    return frames


def run_train(cfg, data_dir, labels_dir, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_frames = load_prepared(cfg, data_dir, labels_dir, "train")
    val_frames = load_prepared(cfg, data_dir, labels_dir, "val") or None
    result = train(train_frames, cfgmod.train_config(cfg), val_frames, cfgmod.model_config(cfg))
    digest = io.write_checkpoint(out / CHECKPOINT, result.model)
    io.write_loss_log(out / "loss_log.csv", result.log)
    cfgmod.write_resolved(out, cfg)
    return result, digest


def enabled_heads(cfg) -> tuple:
    return tuple(h for h in ("sdf", "confidence", "semantic", "color") if cfg[f"train.head_{h}"])


def run_eval(cfg, data_dir, labels_dir, out_dir, checkpoint=None, oracle: bool = False) -> dict:
    """EvalReports for both test splits; ``oracle`` scores ground truth as the prediction."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = {s: load_prepared(cfg, data_dir, labels_dir, s) for s in ("test-seen", "test-unseen")}
    splits = {k: v for k, v in splits.items() if v}
    if not splits:
        raise InputError("dataset has no test frames")
    ecfg = cfgmod.eval_config(cfg, enabled_heads(cfg))
    if oracle:
        reports = evaluate_with(lambda frame, samples: prediction_from_samples(samples), splits, ecfg)
    else:
        if checkpoint is None:
            raise InputError("eval needs a checkpoint (or oracle mode)")
        reports = evaluate(io.read_checkpoint(checkpoint), splits, ecfg)
    io.write_report(out / "report.txt", out / "report.csv", reports)
    cfgmod.write_resolved(out, cfg)
    return reports


@dataclass
class PlanResult:
    spec: nav.GridSpec
    costmap: nav.Costmap
    path: object  # Path or NO_PATH
    semantic: np.ndarray
    elevation: np.ndarray
    traversability: float
    robot_cell: tuple


def plan_grid_spec(cfg, center_xy) -> nav.GridSpec:
    hw = cfg["nav.half_width"]
    return nav.GridSpec.covering(center_xy[0] - hw, center_xy[0] + hw, center_xy[1] - hw, center_xy[1] + hw,
                                 cfg["nav.cell_size"], z=0.0)


def field_grids(model, frame: PreparedFrame, spec: nav.GridSpec, cfg):
    axes = nav.field_axes(spec, (cfg["nav.z_min"], cfg["nav.z_max"]), cfg["nav.z_cells"])
    grid = query_grid(model, frame, None, None, axes=axes)
    semantic, elevation = nav.project_field_to_grids(grid, spec, ground_level=float(frame.robot_pose[2]) - cfg["dataset.lidar_height"])
    return grid, semantic, elevation


def plan_on_field(model, frame: PreparedFrame, start_xy, goal_xy, cfg, baseline: str = "full") -> PlanResult:
    spec = plan_grid_spec(cfg, frame.robot_pose[:2])
    grid, semantic, elevation = field_grids(model, frame, spec, cfg)
    robot = spec.cell_of(frame.robot_pose[:2])
    if baseline == "full":
        cm = nav.full_costmap(semantic, spec, robot, grid.traversability, DEFAULT_SEMANTICS, cfg["nav.k"],
                              cfg["nav.tau"], cfg["nav.variance"], cfg["nav.mode"])
    elif baseline == "semantic":
        cm = nav.semantic_costmap(semantic, spec, DEFAULT_SEMANTICS, cfg["nav.k"], cfg["nav.tau"])
    elif baseline == "elevation":
        cm = nav.elevation_costmap(elevation, spec, cfg["nav.k_e"], cfg["nav.s0"], cfg["nav.h_max"])
    else:
        raise InputError(f"unknown baseline {baseline!r}")
    route = nav.a_star(cm, spec.cell_of(start_xy), spec.cell_of(goal_xy))
    return PlanResult(spec, cm, route, semantic, elevation, grid.traversability, robot)


def _frame_by_id(cfg, data_dir, labels_dir, frame_id: int) -> PreparedFrame:
    manifest = load_dataset(data_dir)
    if str(frame_id) not in manifest.frames:
        raise InputError(f"frame {frame_id} is not in the dataset")
    frame = io.read_frame(Path(data_dir) / manifest.frames[str(frame_id)]["file"])
    if labels_dir is not None:
        samples, score = io.read_labels(Path(labels_dir) / _label_file(frame_id))
    else:
        samples, score = label_frame(frame, cfgmod.label_config(cfg))
    return prepare_frame(frame, mel_config=cfgmod.mel_config(cfg, frame.sample_rate), samples=samples,
                         traversability=score)


def run_plan(cfg, data_dir, checkpoint, frame_id, start_xy, goal_xy, out_dir, labels_dir=None,
             baseline: str = "full") -> PlanResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = io.read_checkpoint(checkpoint)
    frame = _frame_by_id(cfg, data_dir, labels_dir, frame_id)
    result = plan_on_field(model, frame, start_xy, goal_xy, cfg, baseline)
    if result.path:
        io.write_path_csv(out / "path.csv", result.costmap, result.path)
    io.write_pgm(out / "costmap.pgm", result.costmap.cost, invalid_value=255)
    cfgmod.write_resolved(out, cfg)
    return result


def run_export(cfg, data_dir, checkpoint, frame_id, out_dir, labels_dir=None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = io.read_checkpoint(checkpoint)
    frame = _frame_by_id(cfg, data_dir, labels_dir, frame_id)
    spec = plan_grid_spec(cfg, frame.robot_pose[:2])
    grid, semantic, _ = field_grids(model, frame, spec, cfg)
    # Surface shell: occupied samples whose upper neighbour is free.
    occ = grid.sdf <= 0
    shell = occ & ~np.concatenate([occ[..., 1:], np.zeros_like(occ[..., :1])], axis=2)
    X, Y, Z = np.meshgrid(grid.xs, grid.ys, grid.zs, indexing="ij")
    lab = denormalize_lab(bin_centers(grid.color_bins[shell]))
    rgb, _ = lab_to_rgb(lab)
    io.write_ply(out / "field.ply", np.column_stack([X[shell], Y[shell], Z[shell]]), rgb)
    k = int(np.argmin(np.abs(grid.zs - cfg["export.z_slice"])))
    io.write_pgm(out / "sdf_slice.pgm", grid.sdf[:, :, k].T)
    io.write_pgm(out / "confidence.pgm", grid.confidence[:, :, k].T, 0.0, 1.0)
    T = nav.pixel_traversability(nav.semantic_mask(semantic), nav.gaussian_weight(spec, spec.cell_of(frame.robot_pose[:2]),
                                 cfg["nav.variance"]), grid.traversability, cfg["nav.mode"])
    io.write_pgm(out / "traversability.pgm", T, 0.0, 1.0)
    cfgmod.write_resolved(out, cfg)
    return {"points": int(shell.sum()), "z_slice": float(grid.zs[k]), "traversability": grid.traversability}

