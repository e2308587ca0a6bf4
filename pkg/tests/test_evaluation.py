import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvae.data import FactorDataset, synth_factors
from ssvae.errors import VariantError
from ssvae.evaluation import (
    REPORT_COLUMNS,
    BetaVaeConfig,
    EvalReport,
    aggregate_runs,
    anomaly_score,
    auc,
    beta_vae_score,
    format_pm,
    latent_mean_encoder,
    text_table,
    write_summary_csv,
)
from ssvae.experiments import FACTOR_ARCH, FAST_ARCH, fit, anomaly_training_set
from ssvae.losses import bernoulli_nll_per_sample
from ssvae.model import ModelSpec, SsVaeModel
from ssvae.training import TrainConfig


def brute_auc(neg, pos):
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


# -- anomaly scores --------------------------------------------------------------


def test_zero_model_scores_coin_flip():
    m = SsVaeModel.zeros(ModelSpec("EU", 784, (8,), 2, 9, (8,)))
    x = (np.random.default_rng(0).uniform(size=(3, 784)) > 0.5).astype(np.float32)
    np.testing.assert_allclose(anomaly_score(m, x), 784 * math.log(2), rtol=1e-6)


def test_self_reconstruction_is_minimum():
    rng = np.random.default_rng(1)
    x = (rng.uniform(size=(5, 784)) > 0.5).astype(float)
    best = bernoulli_nll_per_sample(x, x)
    assert np.all(best < 1e-4)
    assert np.all(bernoulli_nll_per_sample(x, rng.uniform(size=x.shape)) > best)


def test_score_is_deterministic_and_needs_decoder():
    m = SsVaeModel.initialize(ModelSpec("SS", 20, (8,), 2, 3, (8,)), 0)
    x = np.random.default_rng(2).uniform(size=(7, 20))
    assert anomaly_score(m, x).tobytes() == anomaly_score(m, x).tobytes()
    assert anomaly_score(m, x, samples=4, rng=1).tobytes() == anomaly_score(m, x, samples=4, rng=1).tobytes()
    with pytest.raises(VariantError):
        anomaly_score(SsVaeModel.zeros(ModelSpec("ES", 20, (8,), 2, 3, (8,))), x)


def test_trained_model_scores_held_out_class_higher(mnist):
    train_ds, labels, normal, anom = anomaly_training_set(mnist, 0)
    cfg = TrainConfig(epochs=3, seed=0)
    model, _ = fit(train_ds, cfg, FAST_ARCH)
    assert np.median(anomaly_score(model, anom.features)) > np.median(anomaly_score(model, normal.features))


# -- AUC ---------------------------------------------------------------------------


def test_auc_examples():
    assert auc([1, 2], [3, 4]) == 1.0
    assert auc([5, 5, 5], [5, 5]) == 0.5
    assert auc([1, 3], [2, 4]) == 0.75
    with pytest.raises(ValueError):
        auc([], [1])
    with pytest.raises(ValueError):
        auc([1], [])


scores = st.lists(st.integers(-20, 20).map(float), min_size=1, max_size=200)


@given(scores, scores)
def test_auc_equals_pair_counting(neg, pos):
    assert auc(neg, pos) == brute_auc(neg, pos)


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=60, unique=True), st.integers(1, 59))
def test_auc_complement_without_ties(values, cut):
    cut = min(cut, len(values) - 1)
    a, b = values[:cut], values[cut:]
    assert auc(a, b) + auc(b, a) == pytest.approx(1.0, abs=1e-12)


@given(scores, scores)
def test_auc_invariant_under_monotone_transform(neg, pos):
    f = lambda v: np.exp(np.asarray(v) / 10.0) * 3 - 7  # noqa: E731
    assert auc(f(neg), f(pos)) == auc(neg, pos)


# -- betaVAE ------------------------------------------------------------------------

FDS = synth_factors()


@settings(max_examples=5)
@given(st.integers(0, 2**31 - 1))
def test_oracle_encoder_scores_at_least_95(seed):
    assert beta_vae_score(lambda x: FDS.factor_values.astype(float), FDS, seed=seed) >= 95


@settings(max_examples=5)
@given(st.integers(0, 2**31 - 1))
def test_constant_encoder_near_chance(seed):
    chance = 100 / 4
    assert beta_vae_score(lambda x: np.zeros((len(x), 3)), FDS, seed=seed) <= chance + 5


def test_random_untrained_encoder_within_chance_band():
    spec = FACTOR_ARCH.spec("SS", 256, FDS.factor_cardinalities, pi_to_decoder=False)
    scores = [beta_vae_score(latent_mean_encoder(SsVaeModel.initialize(spec, s)), FDS, seed=s) for s in range(5)]
    chance = 100 / 4
    assert all(abs(s - chance) <= 10 for s in scores), scores


def test_single_valued_factor_excluded_with_warning():
    values = np.array(list(np.ndindex(1, 8, 4, 3)))
    one = FactorDataset(np.eye(len(values)), values, (1, 8, 4, 3))
    cfg = BetaVaeConfig(n_train_points=256, n_test_points=256)
    with pytest.warns(UserWarning, match="single value"):
        score = beta_vae_score(lambda x: one.factor_values.astype(float), one, cfg)
    assert score >= 95


def test_encoder_shape_checked():
    with pytest.raises(ValueError):
        beta_vae_score(lambda x: np.zeros((3, 2)), FDS)


def test_config_validation():
    with pytest.raises(ValueError):
        BetaVaeConfig(batch_pair_size=1)


def test_latent_encoder_requires_latent():
    with pytest.raises(VariantError):
        latent_mean_encoder(SsVaeModel.zeros(ModelSpec("ES", 256, (4,), 2, 3, (4,))))


# -- aggregation ----------------------------------------------------------------------


def reports(values, scenario="s"):
    return [EvalReport(scenario, i, {"m": v}) for i, v in enumerate(values)]


def test_aggregate_examples():
    s = aggregate_runs(reports([0.5, 0.5, 0.5]))["m"]
    assert (s.mean, s.stderr, s.count) == (0.5, 0.0, 3)
    s = aggregate_runs(reports([0.0, 1.0]))["m"]
    assert (s.mean, s.stderr) == (0.5, 0.5)
    assert str(s) == "0.5 ± 0.5"


def test_aggregate_matches_formula():
    vals = np.random.default_rng(3).uniform(size=10)
    s = aggregate_runs(reports(vals))["m"]
    sd = math.sqrt(sum((v - vals.mean()) ** 2 for v in vals) / 9)
    assert s.stderr == pytest.approx(sd / math.sqrt(10), rel=1e-12)
    assert s.mean == pytest.approx(vals.mean(), rel=1e-12)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate_runs(reports([1.0]))
    with pytest.raises(ValueError):
        aggregate_runs(reports([1.0]) + reports([2.0], "other"))


def test_format_pm():
    assert format_pm(0.93461, 0.0009) == "0.9346 ± 0.0009"
    assert format_pm(82.04, 0.7) == "82.0 ± 0.7"


def test_summary_csv_columns_and_table(tmp_path):
    summaries = {"b": aggregate_runs(reports([1.0, 2.0], "b")), "a": aggregate_runs(reports([3.0, 5.0], "a"))}
    write_summary_csv(tmp_path / "s.csv", summaries)
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert [r[0] for r in rows[1:]] == ["b", "a"]
    assert rows[1][2:] == ["1.5", "0.5", "2"]
    table = text_table(summaries)
    assert table.splitlines()[0].startswith("scenario") and "4 ± 1" in table
