"""Multimodal implicit field network and its six-term loss.

Queries go through random Fourier features, colored clouds through a PointNet
variant with input/feature T-Nets, per-leg mel stacks through a small CNN. The
fused trunk feeds five heads: SDF, confidence, color bins, semantics (with an
explicit NULL class) and a per-frame traversability head that never sees the
query.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InputError
from .scene import DEFAULT_SEMANTICS, N_COLOR_BINS, N_LEGS, normalize_lab

HEADS = ("sdf", "confidence", "semantic", "color", "traversability")
LOSS_TERMS = ("sdf", "eikonal", "confidence", "semantics", "color", "traversability")

# Fixed affine normalization of natural-log mel power (floor is log(1e-6)).
MEL_OFFSET = 7.0
MEL_SCALE = 7.0


@dataclass(frozen=True)
class ModelConfig:
    n_classes: int = DEFAULT_SEMANTICS.n_classes
    n_color_bins: int = N_COLOR_BINS
    fourier_features: int = 64
    fourier_scale: float = 2.0
    include_input: bool = True
    point_dims: tuple = (64, 128, 512)
    tnet_dims: tuple = (64, 128)
    audio_channels: tuple = (16, 32, 64)
    audio_feature: int = 128
    trunk_width: int = 256
    head_width: int = 128
    trav_width: int = 64
    dropout: float = 0.1
    s_max: float = 3.0
    softplus_beta: float = 100.0

    @property
    def query_dim(self) -> int:
        return 2 * self.fourier_features + (3 if self.include_input else 0)

    @property
    def cloud_feature(self) -> int:
        return self.point_dims[-1]


def tiny_config(**overrides) -> ModelConfig:
    """Width-8 model used for gradient checks."""
    base = dict(
        fourier_features=4, point_dims=(8, 8, 8), tnet_dims=(8, 8), audio_channels=(8, 8, 8),
        audio_feature=8, trunk_width=8, head_width=8, trav_width=8, dropout=0.0,
    )
    base.update(overrides)
    return ModelConfig(**base)


class FourierEncoding(nn.Module):
    """``[p, sin(2 pi B p), cos(2 pi B p)]`` with a frozen Gaussian ``B``."""

    def __init__(self, n_features: int, scale: float, include_input: bool = True, generator=None):
        super().__init__()
        B = torch.randn(n_features, 3, generator=generator) * scale
        self.register_buffer("B", B)
        self.include_input = include_input

    @property
    def out_dim(self) -> int:
        return 2 * self.B.shape[0] + (3 if self.include_input else 0)

    def forward(self, p):
        proj = 2 * np.pi * p @ self.B.T
        parts = [torch.sin(proj), torch.cos(proj)]
        if self.include_input:
            parts.insert(0, p)
        return torch.cat(parts, dim=-1)


class TNet(nn.Module):
    """Predicts a ``k x k`` transform from a point set; identity at init."""

    def __init__(self, k: int, dims):
        super().__init__()
        self.k = k
        layers, prev = [], k
        for d in dims:
            layers.append(nn.Linear(prev, d))
            prev = d
        self.shared = nn.ModuleList(layers)
        self.out = nn.Linear(prev, k * k)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x):  # x: (F, N, k)
        h = x
        for layer in self.shared:
            h = F.relu(layer(h))
        g = h.amax(dim=1)
        eye = torch.eye(self.k, dtype=x.dtype, device=x.device)
        return self.out(g).view(-1, self.k, self.k) + eye


class PointEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d1, d2, d3 = config.point_dims
        self.tnet_input = TNet(3, config.tnet_dims)
        self.mlp1 = nn.Linear(6, d1)
        self.tnet_feature = TNet(d1, config.tnet_dims)
        self.mlp2 = nn.Linear(d1, d2)
        self.mlp3 = nn.Linear(d2, d3)
        self.residual = nn.Linear(d1, d3, bias=False)

    def per_point(self, x, input_transform=None):
        xyz, lab = x[..., :3], x[..., 3:]
        T = self.tnet_input(xyz) if input_transform is None else input_transform
        xyz = torch.matmul(xyz, T)
        h1 = F.relu(self.mlp1(torch.cat([xyz, lab], dim=-1)))
        h1 = torch.matmul(h1, self.tnet_feature(h1))
        h2 = F.relu(self.mlp2(h1))
        return self.mlp3(h2) + self.residual(h1)

    def forward(self, x, input_transform=None):  # x: (F, N, 6)
        return self.per_point(x, input_transform).amax(dim=1)


class AudioEncoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        chans = (N_LEGS,) + tuple(config.audio_channels)
        self.convs = nn.ModuleList(
            nn.Conv2d(a, b, kernel_size=3, stride=2, padding=1) for a, b in zip(chans[:-1], chans[1:])
        )
        self.out = nn.Linear(chans[-1], config.audio_feature)

    def forward(self, mel):  # mel: (F, 4, n_mels, T)
        if mel.dim() != 4 or mel.shape[1] != N_LEGS:
            raise InputError(f"mel stack must be (F, {N_LEGS}, n_mels, T), got {tuple(mel.shape)}")
        h = (mel + MEL_OFFSET) / MEL_SCALE
        for conv in self.convs:
            h = F.relu(conv(h))
        return self.out(h.mean(dim=(2, 3)))


class ResidualHead(nn.Module):
    """Two smooth layers with a skip, then a scalar output."""

    def __init__(self, d_in: int, width: int, beta: float):
        super().__init__()
        self.fc1 = nn.Linear(d_in, width)
        self.fc2 = nn.Linear(width, width)
        self.out = nn.Linear(width, 1)
        self.beta = beta

    def forward(self, h):
        a = F.softplus(self.fc1(h), beta=self.beta)
        b = F.softplus(self.fc2(a), beta=self.beta) + a
        return self.out(b).squeeze(-1)


class ClassifierHead(nn.Module):
    def __init__(self, d_in: int, width: int, n_out: int, dropout: float):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_in, width), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(width, width), nn.ReLU(), nn.Dropout(dropout),
            nn.Linear(width, n_out),
        )

    def forward(self, h):
        return self.net(h)


@dataclass
class FrameFeatures:
    cloud: torch.Tensor  # (F, cloud_feature)
    audio: torch.Tensor  # (F, audio_feature)
    trunk_bias: torch.Tensor  # (F, trunk_width): frame half of the first trunk layer


class FieldModel(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig(), seed: int = 0):
        super().__init__()
        self.config = config
        gen = torch.Generator().manual_seed(seed)
        torch.manual_seed(seed)
        self.fourier = FourierEncoding(config.fourier_features, config.fourier_scale, config.include_input, gen)
        self.points = PointEncoder(config)
        self.audio = AudioEncoder(config)
        frame_dim = config.cloud_feature + config.audio_feature
        w = config.trunk_width
        # First trunk layer on concat(query, cloud, audio), split by input block.
        self.trunk_query = nn.Linear(config.query_dim, w)
        self.trunk_frame = nn.Linear(frame_dim, w, bias=False)
        self.trunk2 = nn.Linear(w, w)
        self.sdf_head = ResidualHead(w, config.head_width, config.softplus_beta)
        self.confidence_head = ResidualHead(w, config.head_width, config.softplus_beta)
        self.color_head = ClassifierHead(w, config.head_width, 3 * config.n_color_bins, config.dropout)
        self.semantic_head = ClassifierHead(w, config.head_width, config.n_classes + 1, config.dropout)
        self.trav_head = nn.Sequential(nn.Linear(frame_dim, config.trav_width), nn.ReLU(),
                                       nn.Linear(config.trav_width, 1))

    @property
    def null_id(self) -> int:
        return self.config.n_classes

    def encode(self, cloud_input, mel_stack, input_transform=None) -> FrameFeatures:
        cloud = self.points(cloud_input, input_transform)
        audio = self.audio(mel_stack)
        return self.frame_features(cloud, audio)

    def frame_features(self, cloud, audio) -> FrameFeatures:
        return FrameFeatures(cloud, audio, self.trunk_frame(torch.cat([cloud, audio], dim=-1)))

    def traversability(self, feats: FrameFeatures):
        return torch.sigmoid(self.trav_head(torch.cat([feats.cloud, feats.audio], dim=-1))).squeeze(-1)

    def trunk(self, query, trunk_bias):
        beta = self.config.softplus_beta
        h1 = F.softplus(self.trunk_query(self.fourier(query)) + trunk_bias, beta=beta)
        return F.softplus(self.trunk2(h1), beta=beta) + h1

    def sdf(self, query, trunk_bias):
        return self.config.s_max * torch.tanh(self.sdf_head(self.trunk(query, trunk_bias)))

    def query(self, feats: FrameFeatures, query, frame_index=None, heads=HEADS) -> dict:
        """Per-query head outputs; ``frame_index`` maps queries to frames."""
        bias = feats.trunk_bias if frame_index is None else feats.trunk_bias[frame_index]
        h = self.trunk(query, bias)
        out = {}
        if "sdf" in heads:
            out["sdf"] = self.config.s_max * torch.tanh(self.sdf_head(h))
        if "confidence" in heads:
            out["confidence"] = torch.sigmoid(self.confidence_head(h))
        if "color" in heads:
            out["color_logits"] = self.color_head(h).view(-1, 3, self.config.n_color_bins)
        if "semantic" in heads:
            out["semantic_logits"] = self.semantic_head(h)
        return out


def cloud_input(positions, colors_lab) -> np.ndarray:
    """Per-point network input: centered, unit-radius xyz and normalized LAB."""
    xyz = np.asarray(positions, dtype=np.float64)
    if len(xyz) == 0:
        raise InputError("cannot encode an empty point cloud")
    xyz = xyz - xyz.mean(axis=0)
    radius = np.linalg.norm(xyz, axis=1).max()
    xyz = xyz / radius if radius > 0 else xyz
    return np.concatenate([xyz, normalize_lab(colors_lab)], axis=1).astype(np.float32)


def encode_point_cloud(model: FieldModel, cloud, input_transform=None) -> torch.Tensor:
    """512-d global feature of one cloud (a PointCloud or an ``(N, 6)`` input array)."""
    x = cloud if isinstance(cloud, np.ndarray) else cloud_input(cloud.positions, cloud.colors_lab)
    if len(x) == 0:
        raise InputError("cannot encode an empty point cloud")
    dtype = next(model.parameters()).dtype
    return model.points(torch.as_tensor(x, dtype=dtype)[None], input_transform)[0]


def encode_audio(model: FieldModel, stack) -> torch.Tensor:
    dtype = next(model.parameters()).dtype
    stack = torch.as_tensor(np.asarray(stack), dtype=dtype)
    if stack.dim() != 3 or stack.shape[0] != N_LEGS:
        raise InputError(f"mel stack must be ({N_LEGS}, n_mels, T)")
    return model.audio(stack[None])[0]


def forward(model: FieldModel, cloud_feat, audio_feat, query) -> dict:
    """All five head outputs for queries of one frame."""
    feats = model.frame_features(cloud_feat[None], audio_feat[None])
    query = torch.as_tensor(query, dtype=cloud_feat.dtype).reshape(-1, 3)
    out = model.query(feats, query, torch.zeros(len(query), dtype=torch.long))
    out["traversability"] = model.traversability(feats)[0]
    return out


def sdf_input_gradient(model: FieldModel, feats: FrameFeatures, query, frame_index=None,
                       create_graph: bool = False):
    """Exact gradient of the SDF head output with respect to query coordinates."""
    query = torch.as_tensor(query, dtype=feats.trunk_bias.dtype).reshape(-1, 3)
    if not query.requires_grad:
        query = query.detach().requires_grad_(True)
    bias = feats.trunk_bias if frame_index is None else feats.trunk_bias[frame_index]
    if frame_index is None and bias.shape[0] == 1:
        bias = bias.expand(len(query), -1)
    with torch.enable_grad():
        sdf = model.sdf(query, bias)
        (grad,) = torch.autograd.grad(sdf.sum(), query, create_graph=create_graph)
    return grad


@dataclass
class LossConfig:
    lambdas: tuple = (1.0, 0.01, 0.5, 1.0, 0.5, 1.0)
    alpha: float = 0.5
    beta: float = 2.0
    huber_delta: float = 0.1
    head_enable: dict = field(default_factory=lambda: {h: True for h in HEADS})


@dataclass
class LossBreakdown:
    total: float
    sdf: float
    eikonal: float
    confidence: float
    semantics: float
    color: float
    traversability: float

    def components(self) -> tuple:
        return tuple(getattr(self, name) for name in LOSS_TERMS)


def huber(residual, delta: float):
    a = residual.abs()
    return torch.where(a <= delta, 0.5 * residual**2, delta * (a - 0.5 * delta))


def confidence_loss(pred, target, alpha: float, beta: float):
    w = torch.where(target == 1.0, alpha, beta)
    return (w * (pred - target) ** 2).mean()


@dataclass
class Batch:
    """Tensors for one optimization step (F frames, Q queries)."""

    cloud: torch.Tensor  # (F, N, 6)
    mel: torch.Tensor  # (F, 4, n_mels, T)
    query: torch.Tensor  # (Q, 3)
    frame_index: torch.Tensor  # (Q,)
    sdf: torch.Tensor
    confidence: torch.Tensor
    color_bins: torch.Tensor  # (Q, 3), N_COLOR_BINS = NULL
    semantic: torch.Tensor  # (Q,), n_classes = NULL
    traversability: torch.Tensor  # (F,)

    def to(self, dtype) -> "Batch":
        conv = {k: (v.to(dtype) if v.is_floating_point() else v) for k, v in self.__dict__.items()}
        return Batch(**conv)


def loss_terms(model: FieldModel, batch: Batch, config: LossConfig, create_graph: bool = True,
               input_transform=None) -> dict:
    """Per-term loss tensors plus their weighted ``total``."""
    enabled = {h: config.head_enable.get(h, True) for h in HEADS}
    feats = model.encode(batch.cloud, batch.mel, input_transform)
    zero = batch.sdf.new_zeros(())
    terms = dict.fromkeys(LOSS_TERMS, zero)
    query = batch.query.detach().requires_grad_(True)
    heads = [h for h in HEADS if enabled[h] and h != "traversability"]
    with torch.enable_grad():
        out = model.query(feats, query, batch.frame_index, heads=heads)
        if enabled["sdf"]:
            target = batch.sdf.clamp(-model.config.s_max, model.config.s_max)
            terms["sdf"] = huber(out["sdf"] - target, config.huber_delta).mean()
            (grad,) = torch.autograd.grad(out["sdf"].sum(), query, create_graph=create_graph)
            terms["eikonal"] = ((grad.norm(dim=-1) - 1.0) ** 2).mean()
    if enabled["confidence"]:
        terms["confidence"] = confidence_loss(out["confidence"], batch.confidence, config.alpha, config.beta)
    if enabled["semantic"]:
        terms["semantics"] = F.cross_entropy(out["semantic_logits"], batch.semantic)
    if enabled["color"]:
        valid = (batch.color_bins < model.config.n_color_bins).all(dim=1)
        if bool(valid.any()):
            logits = out["color_logits"][valid]
            target = batch.color_bins[valid]
            terms["color"] = sum(F.cross_entropy(logits[:, c], target[:, c]) for c in range(3))
    if enabled["traversability"]:
        terms["traversability"] = ((model.traversability(feats) - batch.traversability) ** 2).mean()
    total = zero
    for lam, name in zip(config.lambdas, LOSS_TERMS):
        total = total + lam * terms[name]
    terms["total"] = total
    return terms


def breakdown(terms: dict) -> LossBreakdown:
    return LossBreakdown(**{k: float(v.detach()) for k, v in terms.items()})
