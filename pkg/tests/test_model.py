import math

import numpy as np
import pytest
import torch

from helpers import input_gradient_check, parameter_gradient_check, tiny_batch, tiny_model
from wildfusion import synth, training
from wildfusion.audio import frame_mel_stack
from wildfusion.errors import InputError
from wildfusion.model import (
    HEADS,
    LOSS_TERMS,
    FieldModel,
    FourierEncoding,
    LossConfig,
    ModelConfig,
    breakdown,
    cloud_input,
    confidence_loss,
    encode_audio,
    encode_point_cloud,
    forward,
    huber,
    loss_terms,
    sdf_input_gradient,
    tiny_config,
)
from wildfusion.scene import DEFAULT_SEMANTICS, N_COLOR_BINS


def test_fourier_encoding_examples():
    enc = FourierEncoding(64, 2.0, include_input=True, generator=torch.Generator().manual_seed(0))
    assert enc.out_dim == 131
    out = enc(torch.zeros(1, 3))[0]
    assert out.shape == (131,)
    assert torch.all(out[3:67] == 0) and torch.all(out[67:] == 1)
    flat = FourierEncoding(8, 2.0, include_input=False)
    flat.B.zero_()
    p = torch.randn(5, 3)
    assert torch.all(flat(p) == flat(torch.zeros(1, 3)))


@pytest.fixture(scope="module")
def model():
    return FieldModel(ModelConfig(), seed=0).eval()


def test_point_encoder_is_permutation_and_duplicate_invariant(model, frame):
    x = cloud_input(frame.cloud.positions, frame.cloud.colors_lab)
    with torch.no_grad():
        ref = encode_point_cloud(model, x)
        perm = encode_point_cloud(model, x[np.random.default_rng(0).permutation(len(x))])
        dup = encode_point_cloud(model, np.concatenate([x, x]))
    assert ref.shape == (512,)
    assert torch.equal(ref, perm) and torch.equal(ref, dup)


def test_point_encoder_rotation_with_injected_transform():
    m = FieldModel(tiny_config(), seed=1).double()
    rng = np.random.default_rng(2)
    x = rng.uniform(-1, 1, (30, 6))
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    rotated = x.copy()
    rotated[:, :3] = x[:, :3] @ q.T  # p -> R p for row vectors
    with torch.no_grad():
        a = m.points.per_point(torch.as_tensor(x)[None], torch.eye(3, dtype=torch.float64)[None])
        b = m.points.per_point(torch.as_tensor(rotated)[None], torch.as_tensor(q)[None])
    torch.testing.assert_close(a, b, rtol=1e-12, atol=1e-12)


def test_point_encoder_rejects_empty(model):
    with pytest.raises(InputError):
        cloud_input(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(InputError):
        encode_point_cloud(model, np.zeros((0, 6), np.float32))


def test_audio_encoder(model, frame):
    with torch.no_grad():
        zero = encode_audio(model, np.zeros((4, 128, 13)))
        assert zero.shape == (128,)
        assert torch.equal(zero, encode_audio(model, np.zeros((4, 128, 13))))
        gravel = frame_mel_stack([synth.synth_audio("gravel", 0.5, seed=s) for s in range(4)])
        grass = frame_mel_stack([synth.synth_audio("grass", 0.5, seed=s) for s in range(4)])
        assert float((encode_audio(model, gravel) - encode_audio(model, grass)).norm()) > 0
        for t in (4, 9, 31):
            assert encode_audio(model, np.zeros((4, 128, t))).shape == (128,)
    with pytest.raises(InputError):
        encode_audio(model, np.zeros((3, 128, 13)))


def test_forward_bounds_and_query_independent_traversability(model, prepared):
    with torch.no_grad():
        cloud = encode_point_cloud(model, prepared.cloud)
        aud = encode_audio(model, prepared.mel)
        q = np.random.default_rng(0).uniform(-50, 50, (256, 3))
        out = forward(model, cloud, aud, q)
    assert out["sdf"].abs().max() <= model.config.s_max
    assert 0 <= out["confidence"].min() and out["confidence"].max() <= 1
    assert 0 <= float(out["traversability"]) <= 1
    assert out["color_logits"].shape == (256, 3, N_COLOR_BINS)
    assert out["semantic_logits"].shape == (256, DEFAULT_SEMANTICS.n_classes + 1)
    with torch.no_grad():
        a = forward(model, cloud, aud, q[:1])["traversability"]
        b = forward(model, cloud, aud, q[1:2])["traversability"]
    assert torch.equal(a, b)


def test_sdf_gradient_matches_finite_differences():
    errors, analytic, _ = input_gradient_check(tiny_model(3), tiny_batch(3), n_probes=100)
    assert errors.max() < 1e-3
    assert np.abs(analytic).max() > 0


def test_finite_difference_error_is_second_order():
    m, b = tiny_model(4), tiny_batch(4)
    coarse = input_gradient_check(m, b, h=1e-3)[0]
    fine = input_gradient_check(m, b, h=1e-4)[0]
    worst = np.unravel_index(np.argmax(coarse), coarse.shape)
    # Ten times smaller steps give about a hundred times smaller truncation error.
    assert 30 < coarse[worst] / fine[worst] < 300


def test_sdf_gradient_vanishes_without_query_dependence():
    m = FieldModel(tiny_config(include_input=False), seed=0).double()
    m.fourier.B.zero_()
    b = tiny_batch()
    feats = m.encode(b.cloud, b.mel)
    g = sdf_input_gradient(m, feats, torch.randn(10, 3, dtype=torch.float64))
    assert torch.all(g == 0)


def test_sdf_gradient_scales_with_s_max():
    a = FieldModel(tiny_config(s_max=3.0), seed=0).double()
    b = FieldModel(tiny_config(s_max=6.0), seed=0).double()
    b.load_state_dict(a.state_dict())
    batch = tiny_batch()
    q = torch.randn(5, 3, dtype=torch.float64)
    ga = sdf_input_gradient(a, a.encode(batch.cloud, batch.mel), q)
    gb = sdf_input_gradient(b, b.encode(batch.cloud, batch.mel), q)
    torch.testing.assert_close(gb, 2 * ga, rtol=1e-12, atol=0)


def test_parameter_gradients_match_finite_differences():
    errors, _ = parameter_gradient_check(tiny_model(5), tiny_batch(5), n_probes=60, seed=5)
    assert errors.max() < 1e-3


def test_huber_and_confidence_examples():
    r = torch.tensor([0.05, 0.5], dtype=torch.float64)
    torch.testing.assert_close(huber(r, 0.1), torch.tensor([0.00125, 0.045], dtype=torch.float64))
    one = confidence_loss(torch.tensor([0.5]), torch.tensor([1.0]), alpha=0.5, beta=2.0)
    assert float(one) == pytest.approx(0.125)
    other = confidence_loss(torch.tensor([0.5]), torch.tensor([0.3]), alpha=0.5, beta=2.0)
    assert float(other) == pytest.approx(2.0 * 0.04)


class _Oracle(FieldModel):
    """Returns the batch targets exactly: sdf = x, saturated logits."""

    def __init__(self, batch):
        super().__init__(tiny_config(), seed=0)
        self.batch = batch

    def encode(self, cloud, mel, input_transform=None):
        return None

    def query(self, feats, query, frame_index=None, heads=HEADS):
        b = self.batch
        n = len(query)
        sem = torch.full((n, self.config.n_classes + 1), -1e3, dtype=query.dtype)
        sem[torch.arange(n), b.semantic] = 1e3
        color = torch.full((n, 3, N_COLOR_BINS), -1e3, dtype=query.dtype)
        safe = b.color_bins.clamp(max=N_COLOR_BINS - 1)
        color[torch.arange(n)[:, None], torch.arange(3)[None, :], safe] = 1e3
        return {"sdf": query[:, 0], "confidence": b.confidence, "semantic_logits": sem, "color_logits": color}

    def traversability(self, feats):
        return self.batch.traversability


def test_perfect_predictions_give_zero_loss():
    b = tiny_batch(n_queries=32)
    b.sdf = b.query[:, 0].clone()
    terms = loss_terms(_Oracle(b), b, LossConfig())
    for name in LOSS_TERMS + ("total",):
        assert float(terms[name].detach()) == 0.0, name


def test_loss_total_is_weighted_sum_and_heads_can_be_disabled():
    m, b = tiny_model(1), tiny_batch(1, n_queries=16)
    cfg = LossConfig(lambdas=(1.0, 0.01, 0.5, 1.0, 0.5, 1.0))
    full = breakdown(loss_terms(m, b, cfg))
    weighted = sum(lam * c for lam, c in zip(cfg.lambdas, full.components()))
    assert full.total == pytest.approx(weighted, rel=1e-6)
    off = LossConfig(lambdas=cfg.lambdas, head_enable={h: h not in ("semantic", "color") for h in HEADS})
    part = breakdown(loss_terms(m, b, off))
    assert part.semantics == 0.0 and part.color == 0.0
    for name in ("sdf", "eikonal", "confidence", "traversability"):
        assert getattr(part, name) == pytest.approx(getattr(full, name), rel=1e-12)


def test_color_term_without_valid_colors_is_zero():
    m, b = tiny_model(), tiny_batch(n_queries=8)
    b.color_bins[:] = N_COLOR_BINS
    b.semantic[:] = DEFAULT_SEMANTICS.null_id
    terms = loss_terms(m, b, LossConfig())
    assert float(terms["color"]) == 0.0 and math.isfinite(float(terms["total"].detach()))


def test_training_is_deterministic(prepared):
    cfg = training.TrainConfig(steps=15, batch_queries=256, frames_per_step=1, eval_every=5, seed=3)
    a = training.train([prepared], cfg).model.state_dict()
    b = training.train([prepared], cfg).model.state_dict()
    assert all(torch.equal(a[k], b[k]) for k in a)


def test_training_rejects_empty_split():
    with pytest.raises(InputError):
        training.train([], training.TrainConfig(steps=1))


@pytest.mark.slow
def test_overfit_one_frame(prepared):
    cfg = training.TrainConfig(steps=2000, frames_per_step=1, eval_every=0, seed=0)
    log = training.train([prepared], cfg).log
    first, last = log[0].total, np.mean([b.total for b in log[-50:]])
    assert last <= 0.05 * first


def test_query_grid_encodes_once_and_matches_predict(model, prepared):
    calls = []
    handle = model.points.register_forward_hook(lambda *a: calls.append(1))
    try:
        grid = training.query_grid(model, prepared, ((-7, -5), (-1, 1), (0, 1)), 10)
    finally:
        handle.remove()
    assert len(calls) == 1
    assert grid.sdf.shape == (10, 10, 10) and grid.sdf.size == 1000
    X, Y, Z = np.meshgrid(grid.xs, grid.ys, grid.zs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    single = training.predict(model, prepared, pts[::97])
    np.testing.assert_allclose(grid.sdf.ravel()[::97], single.sdf, rtol=0, atol=1e-6)
    coarse = training.query_grid(model, prepared, ((-7, -5), (-1, 1), (0, 1)), 5)
    fine = training.query_grid(model, prepared, ((-7, -5), (-1, 1), (0, 1)), 9)
    np.testing.assert_allclose(fine.sdf[::2, ::2, ::2], coarse.sdf, rtol=0, atol=1e-6)
