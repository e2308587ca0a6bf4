"""One function per experiment; the CLI, the scripts and the acceptance tests all call these.

Every run is fully determined by its TrainConfig: ``cfg.seed`` seeds the
weights, the batch order, the latent noise and which samples keep a label.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import LabeledDataset, Splits, make_anomaly_split, mask_labels, synth_factors
from .evaluation import AnomalyReport, EvalReport, anomaly_report, beta_vae_score, latent_mean_encoder
from .model import ModelSpec, SsVaeModel
from .training import RunLog, TrainConfig, build_model, evaluate_classification, train


@dataclass(frozen=True)
class Architecture:
    hidden: int = 1024
    depth: int = 2
    latent: int = 2

    def spec(self, variant: str, input_dim: int, num_classes, pi_to_decoder: bool = True) -> ModelSpec:
        widths = (self.hidden,) * self.depth
        return ModelSpec(variant, input_dim, widths, self.latent, num_classes, widths, pi_to_decoder)


MNIST_ARCH = Architecture()
FAST_ARCH = Architecture(hidden=256)
FACTOR_ARCH = Architecture(hidden=256, latent=10)
FACTOR_TRAIN = TrainConfig(epochs=100, alpha_weight=20.0, beta_norm=0.25, batch_size=64)


def with_labels(ds: LabeledDataset, labels: int | None, seed: int) -> LabeledDataset:
    """``labels=None`` keeps every label; otherwise keep a seeded uniform subset."""
    return ds if labels is None else mask_labels(ds, labels, seed)


def fit(train_ds: LabeledDataset, cfg: TrainConfig, arch: Architecture, pi_to_decoder: bool = True):
    spec = arch.spec(cfg.variant, train_ds.input_dim, train_ds.class_count, pi_to_decoder)
    return train(build_model(spec, cfg.seed), train_ds, cfg)


def run_classification(
    splits: Splits, cfg: TrainConfig, labels: int | None, arch: Architecture = MNIST_ARCH
) -> tuple[SsVaeModel, RunLog, dict[str, float]]:
    """Train one variant on ``labels`` labeled training images; score it on the test split."""
    model, runlog = fit(with_labels(splits.train, labels, cfg.seed), cfg, arch)
    metrics = evaluate_classification(model, splits.test) if model.spec.has_pi else {}
    return model, runlog, metrics


def anomaly_training_set(splits: Splits, anomalous_class: int, labels: int | None = None, fraction: float | None = None):
    train_ds, test_normal, test_anom = make_anomaly_split(splits, anomalous_class)
    if fraction is not None:
        if not 0.0 <= fraction <= 1.0:
            raise ValueError(f"label fraction {fraction} outside [0, 1]")
        labels = int(round(fraction * len(train_ds)))
    return train_ds, labels, test_normal, test_anom


def run_anomaly(
    splits: Splits,
    anomalous_class: int,
    cfg: TrainConfig,
    labels: int | None = None,
    fraction: float | None = None,
    arch: Architecture = MNIST_ARCH,
) -> AnomalyReport:
    """Train on the nine normal classes, score test images by reconstruction NLL."""
    train_ds, labels, test_normal, test_anom = anomaly_training_set(splits, anomalous_class, labels, fraction)
    model, _ = fit(with_labels(train_ds, labels, cfg.seed), cfg, arch)
    return anomaly_report(model, test_normal.features, test_anom.features, anomalous_class)


def run_disentangle(
    labels: int,
    cfg: TrainConfig = FACTOR_TRAIN,
    arch: Architecture = FACTOR_ARCH,
    supervised_only: bool = False,
) -> float:
    """betaVAE score of an SS model (pi not fed to the decoder) trained on synth_factors.

    ``supervised_only`` drops the unlabeled images from training altogether.
    """
    fds = synth_factors()
    ds = mask_labels(fds.as_labeled(), labels, cfg.seed)
    if supervised_only:
        ds = ds.only_labeled()
    model, _ = fit(ds, dataclasses.replace(cfg, variant="SS"), arch, pi_to_decoder=False)
    return beta_vae_score(latent_mean_encoder(model), fds, seed=cfg.seed)


def repeat(
    scenario: str, run: Callable[[TrainConfig], dict[str, float]], cfg: TrainConfig, seeds: Sequence[int]
) -> list[EvalReport]:
    """Run ``run`` once per seed (rows ordered by seed)."""
    return [EvalReport(scenario, s, run(dataclasses.replace(cfg, seed=s))) for s in sorted(seeds)]


def seeds_from(seed: int, repeats: int) -> list[int]:
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    return list(range(seed, seed + repeats))


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
