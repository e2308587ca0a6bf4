"""Seeded training loop, run logs and classification metrics."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import BatchPlan, BatchStream, LabeledDataset
from .errors import DataError, TrainingAborted, VariantError
from .losses import LossWeights, total_loss
from .model import ModelSpec, SsVaeModel
from .optim import RmsPropState, rmsprop_step
from .tensor import Tape

log = logging.getLogger(__name__)

RUNLOG_COLUMNS = ("epoch", "recon_loss", "kl_loss", "cls_loss", "total")
TIMING_COLUMNS = ("epoch", "seconds")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 0.0005
    alpha_weight: float = 50.0
    beta_norm: float = 1.0
    batch_size: int = 128
    policy: str = "balanced_1_to_1"
    seed: int = 0
    checkpoint_path: str | None = None
    variant: str = "SS"
    rho: float = 0.9
    epsilon: float = 1e-7
    clip_norm: float = 100.0
    teacher_forcing: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.beta_norm < 0 or self.alpha_weight < 0:
            raise ValueError("alpha_weight and beta_norm must be >= 0")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.alpha_weight, self.beta_norm)

    def batch_plan(self, seed: int | None = None) -> BatchPlan:
        return BatchPlan(self.batch_size, self.policy, self.seed if seed is None else seed)

    def config_hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def seed_streams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators for initialization, sampling order and latent noise."""
    init, order, noise = np.random.SeedSequence(seed).spawn(3)
    return {
        "init": np.random.default_rng(init),
        "order": np.random.default_rng(order),
        "noise": np.random.default_rng(noise),
    }


def build_model(spec: ModelSpec, seed: int) -> SsVaeModel:
    return SsVaeModel.initialize(spec, seed_streams(seed)["init"])


@dataclass
class EpochRecord:
    epoch: int
    recon_loss: float
    kl_loss: float
    cls_loss: float
    total: float
    seconds: float = 0.0


@dataclass
class RunLog:
    seed: int
    config_hash: str
    records: list[EpochRecord] = field(default_factory=list)

    def totals(self) -> list[float]:
        return [r.total for r in self.records]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(RUNLOG_COLUMNS)
            for r in self.records:
                w.writerow([r.epoch] + [repr(getattr(r, c)) for c in RUNLOG_COLUMNS[1:]])

    def write_timing_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(TIMING_COLUMNS)
            for r in self.records:
                w.writerow([r.epoch, f"{r.seconds:.3f}"])


def training_view(ds: LabeledDataset, variant: str) -> LabeledDataset:
    """What each variant trains on: ES only labeled rows, EU no labels at all."""
    if variant == "ES":
        view = ds.only_labeled()
        if len(view) == 0:
            raise DataError("ES training needs at least one labeled sample")
        return view
    if variant == "EU":
        return ds.without_labels()
    return ds


def _clip_global_norm(grads: list[np.ndarray], max_norm: float) -> float:
    norm = float(np.sqrt(sum(float(np.vdot(g, g)) for g in grads if g is not None)))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            if g is not None:
                g *= scale
    return norm


def train(
    model: SsVaeModel,
    ds: LabeledDataset,
    cfg: TrainConfig,
    streams: dict[str, np.random.Generator] | None = None,
) -> tuple[SsVaeModel, RunLog]:
    """Train ``model`` in place.  Raises :class:`TrainingAborted` on a non-finite loss."""
    if model.spec.variant != cfg.variant:
        raise VariantError(f"config is for {cfg.variant} but model is {model.spec.variant}")
    if len(ds) == 0:
        raise DataError("empty training set")
    streams = streams or seed_streams(cfg.seed)
    data = training_view(ds, cfg.variant)
    params = model.parameters()
    state = RmsPropState.for_params(params, cfg.learning_rate, cfg.rho, cfg.epsilon)
    batches = BatchStream(data, cfg.batch_plan(), streams["order"])
    runlog = RunLog(cfg.seed, cfg.config_hash())
    noise = streams["noise"]
    weights = cfg.weights

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sums = np.zeros(4)
        steps = 0
        for idx in batches.epoch(epoch):
            xb = data.features[idx]
            lb = data.labels[idx]
            model.zero_grad()
            with Tape() as tape:
                out = model.forward(xb, rng=noise, teacher_labels=lb if cfg.teacher_forcing else None)
                loss, parts = total_loss(xb, lb, out, weights)
            values = parts.as_floats()
            for name in ("recon_loss", "kl_loss", "cls_loss", "total"):
                if not np.isfinite(values[name]):
                    raise TrainingAborted(name, epoch + 1, steps + 1)
            tape.backward(loss)
            grads = [p.grad for p in params]
            _clip_global_norm(grads, cfg.clip_norm)
            rmsprop_step(params, grads, state)
            sums += [values["recon_loss"], values["kl_loss"], values["cls_loss"], values["total"]]
            steps += 1
        means = sums / max(steps, 1)
        rec = EpochRecord(epoch + 1, *map(float, means), seconds=time.perf_counter() - t0)
        runlog.records.append(rec)
        log.info("epoch %d: total %.4f (recon %.4f, kl %.4f, cls %.4f) in %.1fs",
                 rec.epoch, rec.total, rec.recon_loss, rec.kl_loss, rec.cls_loss, rec.seconds)
    return model, runlog


def predict_proba(model: SsVaeModel, x: np.ndarray, batch: int = 1000) -> np.ndarray:
    return np.concatenate([model.classify(x[i : i + batch]).data for i in range(0, len(x), batch)])


def evaluate_classification(model: SsVaeModel, ds: LabeledDataset, batch: int = 1000) -> dict[str, float]:
    """Accuracy and mean log loss of the first pi head on a fully labeled set."""
    if not model.spec.has_pi:
        raise VariantError(f"{model.spec.variant} model has no pi head to classify with")
    labels = ds.labels if ds.labels.ndim == 1 else ds.labels[:, 0]
    if np.any(labels < 0):
        raise DataError("evaluation set must be fully labeled")
    proba = predict_proba(model, ds.features, batch).astype(np.float64)
    picked = np.clip(proba[np.arange(len(labels)), labels], 1e-15, 1.0)
    return {
        "accuracy": float(np.mean(proba.argmax(axis=1) == labels)),
        "log_loss": float(-np.mean(np.log(picked))),
    }


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out
