import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvae.errors import DataError
from ssvae.losses import (
    LossWeights,
    bernoulli_nll_per_sample,
    classification_loss,
    kl_divergence,
    reconstruction_nll,
    total_loss,
)
from ssvae.model import ModelSpec, SsVaeModel
from ssvae.tensor import Tensor


def t(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def test_kl_examples():
    assert float(kl_divergence(t([[0.0, 0.0]]), t([[0.0, 0.0]])).data) == 0.0
    assert float(kl_divergence(t([[1.0, 0.0]]), t([[0.0, 0.0]])).data) == pytest.approx(0.5)


def test_kl_matches_monte_carlo():
    rng = np.random.default_rng(0)
    mu = rng.normal(0, 1, 3)
    lv = rng.normal(0, 0.7, 3)
    sd = np.exp(lv / 2)
    z = mu + sd * rng.standard_normal((1_000_000, 3))
    log_q = -0.5 * (((z - mu) / sd) ** 2 + lv + math.log(2 * math.pi))
    log_p = -0.5 * (z**2 + math.log(2 * math.pi))
    mc = float((log_q - log_p).sum(axis=1).mean())
    exact = float(kl_divergence(t([mu]), t([lv])).data)
    assert exact == pytest.approx(mc, rel=0.01)


@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_kl_nonnegative(mu, lv):
    v = float(kl_divergence(t(mu), t(lv)).data)
    assert v >= -1e-12
    if v == 0.0:
        np.testing.assert_allclose(mu, 0, atol=1e-6)


def test_reconstruction_coin_flip():
    x = (np.arange(784) % 2).reshape(1, -1).astype(float)
    assert float(reconstruction_nll(x, t(np.full((1, 784), 0.5))).data) == pytest.approx(784 * math.log(2), rel=1e-9)
    assert 784 * math.log(2) == pytest.approx(543.43, abs=0.01)


def test_reconstruction_near_perfect():
    x = (np.arange(784) % 2).reshape(1, -1).astype(float)
    v = float(reconstruction_nll(x, t(x)).data)
    assert v == pytest.approx(784 * math.log(1 / (1 - 1e-7)), rel=1e-3)
    assert v == pytest.approx(7.84e-5, rel=1e-3)


def test_reconstruction_matches_scalar_loop():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(3, 20))
    r = rng.uniform(0.01, 0.99, size=(3, 20))
    total = 0.0
    for i in range(3):
        for j in range(20):
            total -= x[i, j] * math.log(r[i, j]) + (1 - x[i, j]) * math.log(1 - r[i, j])
    assert float(reconstruction_nll(x, t(r)).data) == pytest.approx(total / 3, rel=1e-10)
    assert bernoulli_nll_per_sample(x, r).sum() == pytest.approx(total, rel=1e-10)


def test_classification_examples():
    pi = t([[0.5, 0.5], [0.2, 0.8], [0.25, 0.75], [0.6, 0.4]])
    assert float(classification_loss(pi, [-1, -1, -1, -1]).data) == 0.0
    assert float(classification_loss(t([[1.0, 0.0]]), [0]).data) == 0.0
    v = float(classification_loss(pi, [0, -1, 0, -1], alpha_weight=1.0).data)
    assert v == pytest.approx(-(math.log(0.5) + math.log(0.25)) / 2)
    assert v == pytest.approx(1.0397, abs=1e-4)


def test_classification_label_out_of_range():
    with pytest.raises(DataError):
        classification_loss(t([[0.5, 0.5]]), [2])


def test_classification_multi_head_adds_heads():
    a, b = t([[0.5, 0.5]]), t([[0.25, 0.75]])
    v = float(classification_loss([a, b], np.array([[0, 0]])).data)
    assert v == pytest.approx(math.log(2) + math.log(4))


@given(st.integers(0, 10_000), st.integers(0, 20))
def test_classification_invariant_to_appended_unlabeled(seed, extra):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(5), size=6)
    labels = rng.integers(-1, 5, size=6)
    labels[0] = 2
    base = float(classification_loss(t(p), labels, 3.0).data)
    p2 = np.vstack([p, rng.dirichlet(np.ones(5), size=extra)])
    l2 = np.concatenate([labels, -np.ones(extra, dtype=int)])
    assert float(classification_loss(t(p2), l2, 3.0).data) == pytest.approx(base, rel=1e-12)


SPEC = ModelSpec("SS", input_dim=10, encoder_widths=(6,), latent_dim=2, num_classes=3, decoder_widths=(5,))


def _batch(seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(4, 10)).astype(np.float32)


def test_total_unlabeled_is_elbo_only():
    m = SsVaeModel.initialize(SPEC, 0)
    x = _batch()
    out = m.forward(x, rng=0)
    total, parts = total_loss(x, [-1] * 4, out, LossWeights(5.0, 1.0))
    f = parts.as_floats()
    assert f["cls_loss"] == 0.0
    assert f["total"] == pytest.approx(f["recon_loss"] + f["kl_loss"], rel=1e-6)


def test_total_beta_zero_ignores_latent_stats():
    m = SsVaeModel.initialize(SPEC, 0)
    x = _batch()
    out = m.forward(x, rng=0)
    a, _ = total_loss(x, [0, 1, -1, 2], out, LossWeights(1.0, 0.0))
    out.mu = Tensor(out.mu.data + 7.0)
    out.log_var = Tensor(out.log_var.data - 3.0)
    b, _ = total_loss(x, [0, 1, -1, 2], out, LossWeights(1.0, 0.0))
    assert float(a.data) == float(b.data)


def test_total_parts_sum_exactly():
    m = SsVaeModel.initialize(SPEC, 1)
    x = _batch(1)
    total, parts = total_loss(x, [0, -1, 2, -1], m.forward(x, rng=1), LossWeights(2.0, 1.0))
    assert total.data == (parts.reconstruction.data + parts.kl.data) + parts.classification.data


def test_total_variant_parts():
    x = _batch()
    es = SsVaeModel.initialize(ModelSpec("ES", 10, (6,), 2, 3, (5,)), 0)
    _, parts = total_loss(x, [0, 1, 2, 0], es.forward(x), LossWeights())
    assert parts.reconstruction is None and parts.kl is None
    eu = SsVaeModel.initialize(ModelSpec("EU", 10, (6,), 2, 3, (5,)), 0)
    _, parts = total_loss(x, [-1] * 4, eu.forward(x, rng=0), LossWeights())
    assert parts.classification is None
