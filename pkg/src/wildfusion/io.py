"""On-disk formats: frames, labels, checkpoints, manifests, reports and exports.

All binary formats are little-endian; floating-point payloads are f32.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError, LabelValidationError
from .scene import (
    DEFAULT_SEMANTICS,
    N_COLOR_BINS,
    N_LEGS,
    Frame,
    PointCloud,
    QuerySamples,
    sample_violations,
)

FRAME_MAGIC = b"WFRM"
LABEL_MAGIC = b"WLBL"
CHECKPOINT_MAGIC = b"WFLD"
FORMAT_VERSION = 1
NULL_U16 = 0xFFFF
SPLITS = ("train", "val", "test-seen", "test-unseen")

_POINT = np.dtype([("xyz", "<f4", 3), ("lab", "<f4", 3), ("semantic", "<u2")])
_SAMPLE = np.dtype([("position", "<f4", 3), ("sdf", "<f4"), ("confidence", "<f4"),
                    ("color", "<u2", 3), ("semantic", "<u2"), ("kind", "u1")])
# magic, version, frame id, n points, n legs, n audio samples, sample rate, n imu, n tactile
_FRAME_HEADER = struct.Struct("<4sHIIIIIII")
# window, pose (x, y, z, yaw), sensor origin
_FRAME_META = struct.Struct("<f4f3f")
_LABEL_HEADER = struct.Struct("<4sHIf")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Reader:
    """Bounds-checked cursor over a byte buffer."""

    def __init__(self, data: bytes, what: str):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, n: int, label: str) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise FormatError(f"truncated {self.what}: need {n} bytes for {label}, "
                              f"{len(self.data) - self.pos} left", self.pos)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, st: struct.Struct, label: str):
        return st.unpack(self.take(st.size, label))

    def array(self, dtype, count: int, label: str) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, label), dtype=dtype, count=count)

    def magic(self, expected: bytes):
        got = self.take(len(expected), "magic")
        if got != expected:
            raise FormatError(f"bad magic {got!r}: expected {expected.decode()!r}", 0)

    def version(self, version: int):
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported {self.what} version {version} (expected {FORMAT_VERSION})", 4)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{len(self.data) - self.pos} trailing bytes after {self.what}", self.pos)


def _u16_ids(ids, null_id: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if np.any((ids < 0) | (ids > null_id)) or null_id >= NULL_U16:
        raise InputError("semantic ids out of range for u16 storage")
    return np.where(ids == null_id, NULL_U16, ids).astype("<u2")


def _from_u16(ids, null_id: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    return np.where(ids == NULL_U16, null_id, ids)


def _timeseries(a, width: int, name: str) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[1] != width:
        raise InputError(f"{name} must be (T, {width}) timestamped rows")
    return a.astype("<f4")


def frame_bytes(frame: Frame, null_id: int = DEFAULT_SEMANTICS.null_id) -> bytes:
    cloud = frame.cloud
    audio = [np.asarray(w) for w in frame.audio]
    if len(audio) != N_LEGS or any(w.shape != audio[0].shape or w.ndim != 1 for w in audio):
        raise InputError(f"frame needs {N_LEGS} equal-length mono audio channels")
    imu = _timeseries(frame.imu_accel, 4, "imu_accel")
    tactile = _timeseries(frame.tactile, 5, "tactile")
    points = np.zeros(len(cloud), dtype=_POINT)
    points["xyz"] = cloud.positions
    points["lab"] = cloud.colors_lab
    points["semantic"] = _u16_ids(cloud.semantic_ids, null_id)
    pose = np.asarray(frame.robot_pose, dtype=np.float32)
    return b"".join([
        _FRAME_HEADER.pack(FRAME_MAGIC, FORMAT_VERSION, int(frame.id), len(cloud), N_LEGS, len(audio[0]),
                           int(frame.sample_rate), len(imu), len(tactile)),
        _FRAME_META.pack(frame.accumulation_window, *pose.tolist(), *np.asarray(cloud.sensor_origin).tolist()),
        points.tobytes(),
        np.stack(audio).astype("<f4").tobytes(),
        imu.tobytes(),
        tactile.tobytes(),
    ])


def parse_frame(data: bytes, null_id: int = DEFAULT_SEMANTICS.null_id) -> Frame:
    r = _Reader(data, "frame")
    r.magic(FRAME_MAGIC)
    r.pos = 0
    _, version, frame_id, n_points, n_legs, n_audio, rate, n_imu, n_tac = r.unpack(_FRAME_HEADER, "header")
    r.version(version)
    if n_legs != N_LEGS:
        raise FormatError(f"frame declares {n_legs} audio channels, expected {N_LEGS}", 12)
    window, px, py, pz, yaw, ox, oy, oz = r.unpack(_FRAME_META, "frame metadata")
    points = r.array(_POINT, n_points, "points")
    audio = r.array("<f4", n_legs * n_audio, "audio").reshape(n_legs, n_audio)
    imu = r.array("<f4", 4 * n_imu, "imu rows").reshape(n_imu, 4)
    tactile = r.array("<f4", 5 * n_tac, "tactile rows").reshape(n_tac, 5)
    r.finish()
    cloud = PointCloud(
        points["xyz"].astype(np.float32),
        points["lab"].astype(np.float32),
        _from_u16(points["semantic"], null_id),
        np.array([ox, oy, oz], dtype=np.float32),
    )
    return Frame(
        id=int(frame_id),
        cloud=cloud,
        audio=[a.astype(np.float32) for a in audio],
        sample_rate=int(rate),
        imu_accel=imu.astype(np.float32),
        tactile=tactile.astype(np.float32),
        robot_pose=np.array([px, py, pz, yaw], dtype=np.float32),
        accumulation_window=float(window),
    )


def write_frame(path, frame: Frame) -> str:
    data = frame_bytes(frame)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def read_frame(path) -> Frame:
    return parse_frame(Path(path).read_bytes())


def frames_equal(a: Frame, b: Frame) -> bool:
    """Bitwise equality of every persisted field."""
    return frame_bytes(a) == frame_bytes(b)


def label_bytes(samples: QuerySamples, traversability: float = math.nan,
                table=DEFAULT_SEMANTICS) -> bytes:
    bad = sample_violations(samples, table)
    if bad:
        index, message = bad[0]
        raise LabelValidationError(message, index=index)
    rec = np.zeros(len(samples), dtype=_SAMPLE)
    rec["position"] = samples.positions
    rec["sdf"] = samples.sdf
    rec["confidence"] = samples.confidence
    color = np.asarray(samples.color_bins, dtype=np.int64)
    rec["color"] = np.where(color >= N_COLOR_BINS, NULL_U16, color)
    rec["semantic"] = _u16_ids(samples.semantic_ids, table.null_id)
    rec["kind"] = samples.kinds
    header = _LABEL_HEADER.pack(LABEL_MAGIC, FORMAT_VERSION, len(samples), traversability)
    return header + rec.tobytes()


def parse_labels(data: bytes, table=DEFAULT_SEMANTICS, validate: bool = True):
    """Returns ``(samples, traversability)``; ``traversability`` is NaN when not stored."""
    r = _Reader(data, "label file")
    r.magic(LABEL_MAGIC)
    r.pos = 0
    _, version, count, trav = r.unpack(_LABEL_HEADER, "header")
    r.version(version)
    start = r.pos
    rec = r.array(_SAMPLE, count, "sample records")
    r.finish()
    color = rec["color"].astype(np.int64)
    samples = QuerySamples(
        rec["position"].astype(np.float32),
        rec["sdf"].astype(np.float32),
        rec["confidence"].astype(np.float32),
        np.where(color == NULL_U16, N_COLOR_BINS, color),
        _from_u16(rec["semantic"], table.null_id),
        rec["kind"].astype(np.int8),
    )
    if validate:
        bad = sample_violations(samples, table)
        if bad:
            index, message = bad[0]
            raise LabelValidationError(message, offset=start + index * _SAMPLE.itemsize,
                                       index=index)
    return samples, float(trav)


def write_labels(path, samples: QuerySamples, traversability: float = math.nan) -> str:
    data = label_bytes(samples, traversability)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def read_labels(path, validate: bool = True):
    return parse_labels(Path(path).read_bytes(), validate=validate)


def samples_equal(a: QuerySamples, b: QuerySamples) -> bool:
    return all(np.array_equal(getattr(a, f), getattr(b, f)) and getattr(a, f).dtype == getattr(b, f).dtype
               for f in ("positions", "sdf", "confidence", "color_bins", "semantic_ids", "kinds"))


def model_config_dict(config) -> dict:
    return {f.name: (list(v) if isinstance(v := getattr(config, f.name), tuple) else v) for f in fields(config)}


def checkpoint_bytes(model) -> bytes:
    """Config block as canonical JSON, then every named tensor of the state dict as f32."""
    cfg = json.dumps(model_config_dict(model.config), sort_keys=True, separators=(",", ":")).encode()
    parts = [CHECKPOINT_MAGIC, struct.pack("<HI", FORMAT_VERSION, len(cfg)), cfg]
    state = model.state_dict()
    parts.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy()
        if not np.all(np.isfinite(arr)):
            raise InputError(f"parameter {name} is not finite")
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


def parse_checkpoint(data: bytes):
    import torch

    from .model import FieldModel, ModelConfig

    r = _Reader(data, "checkpoint")
    r.magic(CHECKPOINT_MAGIC)
    version, cfg_len = r.unpack(struct.Struct("<HI"), "header")
    r.version(version)
    try:
        raw = json.loads(r.take(cfg_len, "config block").decode())
        config = ModelConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    except (ValueError, TypeError) as exc:
        raise FormatError(f"invalid config block: {exc}", 10) from exc
    (count,) = r.unpack(struct.Struct("<I"), "tensor count")
    state = {}
    for _ in range(count):
        (n,) = r.unpack(struct.Struct("<H"), "name length")
        name = r.take(n, "tensor name").decode()
        (ndim,) = r.unpack(struct.Struct("<B"), "rank")
        shape = r.unpack(struct.Struct(f"<{ndim}I"), "shape")
        arr = r.array("<f4", int(np.prod(shape, dtype=np.int64)), f"tensor {name}").reshape(shape)
        state[name] = torch.from_numpy(arr.astype(np.float32))
    r.finish()
    model = FieldModel(config)
    missing = set(model.state_dict()) ^ set(state)
    if missing:
        raise FormatError(f"checkpoint tensors do not match the model: {sorted(missing)}", r.pos)
    model.load_state_dict(state)
    model.eval()
    return model


def write_checkpoint(path, model) -> str:
    data = checkpoint_bytes(model)
    Path(path).write_bytes(data)
    return sha256_bytes(data)


def read_checkpoint(path):
    return parse_checkpoint(Path(path).read_bytes())


@dataclass
class DatasetManifest:
    version: int
    scene_seed: int
    unseen_scene_seed: int
    config_digest: str
    frames: dict  # frame id (str) -> {"file", "sha256", "split"}
    sample_rate: int
    constants: dict = field(default_factory=dict)

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    def split_ids(self, split: str) -> list:
        if split not in SPLITS:
            raise InputError(f"unknown split {split!r}")
        return sorted(int(k) for k, v in self.frames.items() if v["split"] == split)

    def validate(self, root=None) -> list:
        """Violations: unknown splits, and (given ``root``) missing files or digest mismatches."""
        problems = []
        for fid, entry in sorted(self.frames.items(), key=lambda kv: int(kv[0])):
            if entry.get("split") not in SPLITS:
                problems.append(f"frame {fid}: unknown split {entry.get('split')!r}")
            if root is not None:
                p = Path(root) / entry["file"]
                if not p.exists():
                    problems.append(f"frame {fid}: missing file {entry['file']}")
                elif sha256_file(p) != entry["sha256"]:
                    problems.append(f"frame {fid}: digest mismatch for {entry['file']}")
        return problems

    def to_json(self) -> str:
        d = asdict(self)
        d["frame_count"] = self.frame_count
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        try:
            d = json.loads(text)
            d.pop("frame_count", None)
            return cls(**d)
        except (ValueError, TypeError) as exc:
            raise FormatError(f"invalid manifest: {exc}", 0) from exc


def write_manifest(path, manifest: DatasetManifest) -> None:
    Path(path).write_text(manifest.to_json())


def read_manifest(path) -> DatasetManifest:
    return DatasetManifest.from_json(Path(path).read_text())


def _fmt(v) -> str:
    if v is None:
        return "absent"
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def report_text(reports: dict) -> str:
    """``split.group.metric = value`` lines; absent metrics are written as ``absent``."""
    lines = []
    for split, report in reports.items():
        for key, value in report.flat().items():
            lines.append(f"{split}.{key} = {_fmt(value)}")
    return "\n".join(lines) + "\n"


def write_report(text_path, csv_path, reports: dict) -> None:
    Path(text_path).write_text(report_text(reports))
    rows = [row for name, rep in reports.items() if name != "aggregate" for row in rep.frames]
    keys = ["split", "frame_id"] + list(next(iter(reports.values())).flat())
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(keys)
        for row in rows:
            w.writerow([_fmt(row[k]) for k in keys])


def read_report_text(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = None if value == "absent" else float(value)
    return out


def write_loss_log(path, log) -> None:
    from .model import LOSS_TERMS

    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("step",) + LOSS_TERMS + ("total",))
        for step, b in enumerate(log):
            w.writerow([step] + [repr(float(getattr(b, k))) for k in LOSS_TERMS] + [repr(float(b.total))])


def write_traversability_csv(path, scores: dict) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("frame_id", "score"))
        for fid in sorted(scores):
            w.writerow((fid, repr(float(scores[fid]))))


def read_traversability_csv(path) -> dict:
    with open(path, newline="") as f:
        return {int(r["frame_id"]): float(r["score"]) for r in csv.DictReader(f)}


def write_path_csv(path, costmap, route) -> None:
    """One row per cell: ``row, col, accumulated cost``."""
    from .nav import step_cost

    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("row", "col", "cost"))
        total = 0.0
        for i, cell in enumerate(route.cells):
            if i:
                total += step_cost(costmap.cost, route.cells[i - 1], cell)
            w.writerow((cell[0], cell[1], repr(float(total))))


def read_path_csv(path) -> list:
    with open(path, newline="") as f:
        return [(int(r["row"]), int(r["col"]), float(r["cost"])) for r in csv.DictReader(f)]


def write_pgm(path, image, vmin=None, vmax=None, invalid_value: int = 0) -> None:
    """8-bit binary PGM (P5); row 0 of ``image`` is written as the bottom row.

    Non-finite pixels get ``invalid_value``; finite ones are scaled to 1..255.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise InputError("PGM export needs a 2-D grid")
    finite = np.isfinite(img)
    lo = float(np.min(img[finite])) if vmin is None and finite.any() else (vmin or 0.0)
    hi = float(np.max(img[finite])) if vmax is None and finite.any() else (vmax if vmax is not None else 1.0)
    scale = (np.clip(img, lo, hi) - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    pix = np.where(finite, 1 + np.round(np.nan_to_num(scale) * 254), invalid_value).astype(np.uint8)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix[::-1].tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P5":
        raise FormatError("not a binary PGM (expected magic 'P5')", 0)
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8)
    if maxval != 255 or pix.size != w * h:
        raise FormatError("truncated or unsupported PGM", len(data))
    return pix.reshape(h, w)[::-1]


def write_ply(path, positions, rgb) -> None:
    """ASCII PLY with per-vertex position and 8-bit color."""
    positions = np.asarray(positions, dtype=np.float32).reshape(-1, 3)
    rgb = np.asarray(rgb, dtype=np.uint8).reshape(-1, 3)
    if len(positions) != len(rgb):
        raise InputError("positions and colors differ in length")
    header = ("ply\nformat ascii 1.0\n"
              f"element vertex {len(positions)}\n"
              "property float x\nproperty float y\nproperty float z\n"
              "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n")
    body = "".join(f"{p[0]!r} {p[1]!r} {p[2]!r} {c[0]} {c[1]} {c[2]}\n"
                   for p, c in zip(positions.tolist(), rgb.tolist()))
    Path(path).write_text(header + body)


def read_ply(path):
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "ply":
        raise FormatError("not a PLY file (expected magic 'ply')", 0)
    n = next(int(line.split()[2]) for line in lines if line.startswith("element vertex"))
    start = lines.index("end_header") + 1
    rows = np.array([line.split() for line in lines[start:start + n]], dtype=float).reshape(-1, 6)
    return rows[:, :3].astype(np.float32), rows[:, 3:].astype(np.uint8)
