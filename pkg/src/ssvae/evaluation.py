"""Anomaly scoring and AUC, the betaVAE disentanglement score, report aggregation."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import FactorDataset
from .errors import VariantError
from .losses import bernoulli_nll_per_sample
from .model import SsVaeModel, reparameterize


# -- anomaly detection ----------------------------------------------------------


def anomaly_score(
    model: SsVaeModel,
    x: np.ndarray,
    samples: int = 0,
    rng: np.random.Generator | int | None = None,
    batch: int = 1000,
) -> np.ndarray:
    """Per-sample Bernoulli NLL of ``x`` under its own reconstruction; larger = more anomalous.

    ``samples=0`` decodes z = mu.  ``samples=K`` averages the NLL over K
    latent draws instead.
    """
    if not model.spec.has_decoder:
        raise VariantError(f"{model.spec.variant} model cannot reconstruct")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    scores = []
    for i in range(0, len(x), batch):
        xb = np.asarray(x[i : i + batch])
        mu, log_var, pis = model.encode(xb)
        if samples == 0:
            recon = model.decode(pis, mu).data
            scores.append(bernoulli_nll_per_sample(xb, recon))
        else:
            acc = np.zeros(len(xb))
            for _ in range(samples):
                acc += bernoulli_nll_per_sample(xb, model.decode(pis, reparameterize(mu, log_var, rng)).data)
            scores.append(acc / samples)
    return np.concatenate(scores) if scores else np.zeros(0)


def auc(scores_negative: Sequence[float], scores_positive: Sequence[float]) -> float:
    """P(positive > negative) + P(tie)/2, by rank sums (average ranks for ties)."""
    neg = np.asarray(scores_negative, dtype=np.float64).ravel()
    pos = np.asarray(scores_positive, dtype=np.float64).ravel()
    if neg.size == 0 or pos.size == 0:
        raise ValueError("auc needs at least one negative and one positive score")
    both = np.concatenate([pos, neg])
    order = np.argsort(both, kind="mergesort")
    ranks = np.empty(both.size, dtype=np.float64)
    sorted_vals = both[order]
    # average 1-based ranks over runs of equal values
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    ends = np.r_[starts[1:], both.size]
    avg = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(avg, ends - starts)
    n_pos, n_neg = pos.size, neg.size
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class AnomalyReport:
    anomalous_class: int
    auc: float
    n_normal: int
    n_anomalous: int
    normal_stats: dict[str, float] = field(default_factory=dict)
    anomalous_stats: dict[str, float] = field(default_factory=dict)


def _stats(s: np.ndarray) -> dict[str, float]:
    return {"mean": float(s.mean()), "median": float(np.median(s)), "std": float(s.std())}


def anomaly_report(model: SsVaeModel, normal: np.ndarray, anomalous: np.ndarray, anomalous_class: int) -> AnomalyReport:
    s_norm = anomaly_score(model, normal)
    s_anom = anomaly_score(model, anomalous)
    return AnomalyReport(
        anomalous_class, auc(s_norm, s_anom), len(s_norm), len(s_anom), _stats(s_norm), _stats(s_anom)
    )


# -- betaVAE score --------------------------------------------------------------


@dataclass(frozen=True)
class BetaVaeConfig:
    batch_pair_size: int = 64
    n_train_points: int = 2048
    n_test_points: int = 2048
    regressor_steps: int = 2000
    regressor_lr: float = 0.1

    def __post_init__(self):
        if self.batch_pair_size < 2 or self.n_train_points < 1 or self.n_test_points < 1:
            raise ValueError(f"invalid betaVAE config {self}")


def _beta_vae_points(codes, fds: FactorDataset, active, n_points, pairs, rng):
    cards = np.asarray(fds.factor_cardinalities)
    choice = rng.integers(0, len(active), size=n_points)
    fixed = np.asarray(active)[choice]
    v1 = rng.integers(0, cards, size=(n_points, pairs, len(cards)))
    v2 = rng.integers(0, cards, size=(n_points, pairs, len(cards)))
    rows = np.arange(n_points)
    v2[rows, :, fixed] = v1[rows, :, fixed]
    i1 = fds.index_of(v1.reshape(-1, len(cards))).reshape(n_points, pairs)
    i2 = fds.index_of(v2.reshape(-1, len(cards))).reshape(n_points, pairs)
    feats = np.abs(codes[i1] - codes[i2]).mean(axis=1)
    return feats, choice


def fit_softmax_regression(x: np.ndarray, y: np.ndarray, n_classes: int, steps: int, lr: float):
    """Multinomial logistic regression by full-batch gradient descent on standardized inputs."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    xs = (x - mean) / std
    w = np.zeros((x.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[y]
    n = len(x)
    for _ in range(steps):
        logits = xs @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        w -= lr * xs.T @ g
        b -= lr * g.sum(axis=0)

    def predict(xn: np.ndarray) -> np.ndarray:
        return (((xn - mean) / std) @ w + b).argmax(axis=1)

    return predict


def beta_vae_score(
    encoder: Callable[[np.ndarray], np.ndarray],
    fds: FactorDataset,
    cfg: BetaVaeConfig = BetaVaeConfig(),
    seed: int = 0,
) -> float:
    """Test accuracy (in percent) of predicting the fixed factor from mean |code differences|.

    ``encoder`` maps a feature matrix to latent means, one row per image.
    """
    active = [k for k, c in enumerate(fds.factor_cardinalities) if c > 1]
    dropped = [k for k, c in enumerate(fds.factor_cardinalities) if c <= 1]
    if dropped:
        warnings.warn(f"factors {dropped} have a single value and are excluded from the betaVAE score")
    if not active:
        raise ValueError("no factor with more than one value")
    codes = np.asarray(encoder(fds.features), dtype=np.float64)
    if codes.ndim != 2 or len(codes) != len(fds):
        raise ValueError(f"encoder returned shape {codes.shape} for {len(fds)} images")
    rng = np.random.default_rng(seed)
    x_tr, y_tr = _beta_vae_points(codes, fds, active, cfg.n_train_points, cfg.batch_pair_size, rng)
    x_te, y_te = _beta_vae_points(codes, fds, active, cfg.n_test_points, cfg.batch_pair_size, rng)
    predict = fit_softmax_regression(x_tr, y_tr, len(active), cfg.regressor_steps, cfg.regressor_lr)
    return float(np.mean(predict(x_te) == y_te) * 100.0)


def latent_mean_encoder(model: SsVaeModel, batch: int = 1000) -> Callable[[np.ndarray], np.ndarray]:
    """Encoder callable returning mu (never the pi heads)."""
    if not model.spec.has_latent:
        raise VariantError(f"{model.spec.variant} model has no latent layer")

    def encode(x: np.ndarray) -> np.ndarray:
        return np.concatenate([model.encode_latent(x[i : i + batch])[0].data for i in range(0, len(x), batch)])

    return encode


# -- aggregation and reports -------------------------------------------------------


@dataclass
class EvalReport:
    scenario: str
    seed: int
    metrics: dict[str, float]
    meta: dict[str, str] = field(default_factory=dict)


@dataclass
class MetricSummary:
    mean: float
    stderr: float
    count: int

    def __str__(self) -> str:
        return format_pm(self.mean, self.stderr)


def format_pm(mean: float, stderr: float) -> str:
    if stderr == 0 or not math.isfinite(stderr):
        return f"{mean:.4g} ± {stderr:.1g}" if math.isfinite(stderr) else f"{mean:.4g}"
    digits = max(0, -int(math.floor(math.log10(abs(stderr)))))
    return f"{mean:.{digits}f} ± {stderr:.{digits}f}"


def aggregate_runs(reports: Sequence[EvalReport]) -> dict[str, MetricSummary]:
    """Mean and standard error of the mean per metric over repeated runs of one scenario."""
    if len(reports) < 2:
        raise ValueError("aggregate_runs needs at least two reports")
    scenarios = {r.scenario for r in reports}
    if len(scenarios) != 1:
        raise ValueError(f"cannot aggregate across scenarios {sorted(scenarios)}")
    names = list(reports[0].metrics)
    out = {}
    for name in names:
        vals = np.array([r.metrics[name] for r in reports], dtype=np.float64)
        sem = float(vals.std(ddof=1) / math.sqrt(len(vals)))
        out[name] = MetricSummary(float(vals.mean()), sem, len(vals))
    return out


def summarize_by_scenario(reports: Sequence[EvalReport]) -> dict[str, dict[str, MetricSummary]]:
    """Group reports by scenario (first-seen order); a lone run gets a NaN stderr."""
    groups: dict[str, list[EvalReport]] = {}
    for r in reports:
        groups.setdefault(r.scenario, []).append(r)
    out = {}
    for scenario, rs in groups.items():
        if len(rs) >= 2:
            out[scenario] = aggregate_runs(rs)
        else:
            out[scenario] = {k: MetricSummary(float(v), float("nan"), 1) for k, v in rs[0].metrics.items()}
    return out


REPORT_COLUMNS = ("scenario", "metric", "value", "stderr", "seeds")


def write_summary_csv(path, summaries: dict[str, dict[str, MetricSummary]]) -> None:
    """One row per (scenario, metric), in insertion order."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(REPORT_COLUMNS)
        for scenario, metrics in summaries.items():
            for metric, s in metrics.items():
                w.writerow([scenario, metric, repr(s.mean), repr(s.stderr), s.count])


def write_runs_csv(path, reports: Sequence[EvalReport]) -> None:
    metrics = list(reports[0].metrics) if reports else []
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["scenario", "seed", *metrics])
        for r in reports:
            w.writerow([r.scenario, r.seed, *(repr(r.metrics[m]) for m in metrics)])


def text_table(summaries: dict[str, dict[str, MetricSummary]]) -> str:
    metrics: list[str] = []
    for m in summaries.values():
        metrics += [k for k in m if k not in metrics]
    rows = [["scenario", *metrics]]
    for scenario, m in summaries.items():
        rows.append([scenario, *(str(m[k]) if k in m else "-" for k in metrics)])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    return "\n".join(lines)
