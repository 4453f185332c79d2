"""Shared oracles for the unit and acceptance tests."""

import numpy as np
import torch

from wildfusion.model import Batch, FieldModel, LossConfig, loss_terms, sdf_input_gradient, tiny_config
from wildfusion.scene import DEFAULT_SEMANTICS, N_COLOR_BINS


# Small pipeline configuration for end-to-end runs in seconds.
TINY = """\
[dataset]
n_frames = 24
n_points = 512
[lidar]
n_rays = 800
[train]
steps = 20
eval_every = 10
[model]
point_dims = [16, 32, 64]
trunk_width = 32
head_width = 32
[eval]
pool = 2000
[nav]
half_width = 3.0
"""


def naive_dft_magnitude(frames):
    """Direct O(n^2) one-sided DFT magnitudes of each row."""
    frames = np.atleast_2d(frames)
    n = frames.shape[1]
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    basis = np.exp(-2j * np.pi * ((k * t) % n) / n)
    return np.abs(frames @ basis.T)


def brute_nearest(points, queries):
    """Nearest distances by exhaustive search."""
    return np.sqrt(((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)).min(axis=1)


def rel_error(a, b, floor=1e-6):
    """``|a - b| / max(|a|, |b|, floor)``; the floor keeps vanishing gradients from dividing by zero."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def tiny_batch(seed=0, n_points=10, n_queries=2, n_mels=16, n_time=8, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    null = DEFAULT_SEMANTICS.null_id
    sem = torch.randint(0, null + 1, (n_queries,), generator=g)
    bins = torch.randint(0, N_COLOR_BINS, (n_queries, 3), generator=g)
    bins[sem == null] = N_COLOR_BINS
    conf = torch.rand(n_queries, generator=g, dtype=dtype)
    conf[::2] = 1.0
    return Batch(
        cloud=torch.rand(1, n_points, 6, generator=g, dtype=dtype) * 2 - 1,
        mel=torch.randn(1, 4, n_mels, n_time, generator=g, dtype=dtype),
        query=torch.randn(n_queries, 3, generator=g, dtype=dtype),
        frame_index=torch.zeros(n_queries, dtype=torch.long),
        sdf=torch.randn(n_queries, generator=g, dtype=dtype) * 0.3,
        confidence=conf,
        color_bins=bins,
        semantic=sem,
        traversability=torch.rand(1, generator=g, dtype=dtype),
    )


def tiny_model(seed=0, **overrides):
    model = FieldModel(tiny_config(**overrides), seed=seed).double()
    model.eval()  # dropout is zero anyway; keep the graph deterministic
    # Shift the zero-initialised T-Net outputs so their gradients are generic.
    with torch.no_grad():
        for tnet in (model.points.tnet_input, model.points.tnet_feature):
            tnet.out.weight.normal_(0, 0.1, generator=torch.Generator().manual_seed(seed + 7))
    return model


def parameter_gradient_check(model, batch, n_probes=100, h=1e-6, seed=0, config=LossConfig()):
    """Relative errors of autograd vs central differences on random scalar parameters."""
    params = [p for p in model.parameters() if p.requires_grad]
    model.zero_grad()
    loss_terms(model, batch, config)["total"].backward()
    grads = [p.grad.detach().clone() for p in params]
    sizes = np.array([p.numel() for p in params])
    rng = np.random.default_rng(seed)
    # Cover every tensor before sampling the rest at random.
    tensors = list(range(len(params))) + list(rng.choice(len(params), n_probes - len(params), p=sizes / sizes.sum()))
    errors, probes = [], []
    with torch.no_grad():
        for t in tensors[:n_probes]:
            flat = params[t].view(-1)
            i = int(rng.integers(flat.numel()))
            old = flat[i].item()
            flat[i] = old + h
            up = _loss(model, batch, config)
            flat[i] = old - h
            down = _loss(model, batch, config)
            flat[i] = old
            fd = (up - down) / (2 * h)
            an = grads[t].view(-1)[i].item()
            errors.append(rel_error(an, fd)), probes.append((t, i, an, fd))
    return np.array(errors, dtype=float), probes


def _loss(model, batch, config):
    with torch.enable_grad():
        return float(loss_terms(model, batch, config, create_graph=False)["total"].detach())


def input_gradient_check(model, batch, n_probes=100, h=1e-5, seed=0):
    """Relative errors of the analytic SDF input gradient vs central differences."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        feats = model.encode(batch.cloud, batch.mel)
    q = torch.randn(n_probes, 3, generator=g, dtype=torch.float64)
    analytic = sdf_input_gradient(model, feats, q).numpy()
    fd = np.zeros_like(analytic)
    bias = feats.trunk_bias.expand(n_probes, -1)
    with torch.no_grad():
        for axis in range(3):
            e = torch.zeros(3, dtype=torch.float64)
            e[axis] = h
            fd[:, axis] = ((model.sdf(q + e, bias) - model.sdf(q - e, bias)) / (2 * h)).numpy()
    return rel_error(analytic, fd), analytic, fd
