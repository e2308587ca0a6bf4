"""Composite objective: Bernoulli reconstruction NLL + weighted KL + masked cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError, DimensionError
from .model import ForwardOutputs
from .tensor import Tensor

RECON_CLAMP = 1e-7
PI_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    alpha_weight: float = 1.0
    beta_norm: float = 1.0


@dataclass
class LossParts:
    reconstruction: Tensor | None
    kl: Tensor | None
    classification: Tensor | None
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        def f(t):
            return 0.0 if t is None else float(t.data)

        return {
            "recon_loss": f(self.reconstruction),
            "kl_loss": f(self.kl),
            "cls_loss": f(self.classification),
            "total": f(self.total),
        }


def kl_divergence(mu: Tensor, log_var: Tensor) -> Tensor:
    """Batch mean of KL(N(mu, exp(log_var)) || N(0, I))."""
    if mu.shape != log_var.shape:
        raise DimensionError(f"kl_divergence: mu {mu.shape} vs log_var {log_var.shape}")
    per_dim = T.exp(log_var) + mu * mu - 1.0 - log_var
    return T.reduce_sum(per_dim) * (0.5 / mu.shape[0])


def reconstruction_nll(x, x_recon: Tensor) -> Tensor:
    """Batch mean of the per-sample Bernoulli NLL summed over pixels."""
    x = T.as_tensor(x, x_recon)
    if x.shape != x_recon.shape:
        raise DimensionError(f"reconstruction_nll: x {x.shape} vs x_recon {x_recon.shape}")
    r = T.clip(x_recon, RECON_CLAMP, 1 - RECON_CLAMP)
    ll = x * T.log(r) + (1.0 - x) * T.log(1.0 - r)
    return T.reduce_sum(ll) * (-1.0 / x.shape[0])


def bernoulli_nll_per_sample(x: np.ndarray, x_recon: np.ndarray) -> np.ndarray:
    """Same likelihood as :func:`reconstruction_nll`, one value per row, no tape."""
    r = np.clip(x_recon.astype(np.float64), RECON_CLAMP, 1 - RECON_CLAMP)
    x = x.astype(np.float64)
    return -(x * np.log(r) + (1 - x) * np.log1p(-r)).sum(axis=1)


def _label_matrix(labels, n: int, heads: int) -> np.ndarray:
    if labels is None:
        return np.full((n, heads), -1, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape != (n, heads):
        raise DimensionError(f"labels of shape {labels.shape} do not match batch {n} with {heads} head(s)")
    return labels


def classification_loss(pi, labels, alpha_weight: float = 1.0) -> Tensor:
    """-(alpha / #labeled) * sum over labeled rows of log pi[true class].

    ``labels`` holds -1 for unlabeled rows.  With several heads (``pi`` a list,
    ``labels`` of shape (n, heads)) the per-head terms are added, each
    normalized by its own labeled count.  Exactly zero when nothing is labeled.
    """
    heads = list(pi) if isinstance(pi, (list, tuple)) else [pi]
    n = heads[0].shape[0]
    lab = _label_matrix(labels, n, len(heads))
    total = None
    for k, p in enumerate(heads):
        col = lab[:, k]
        c = p.shape[1]
        if np.any(col >= c):
            raise DataError(f"label {int(col.max())} out of range for {c} classes")
        rows = np.flatnonzero(col >= 0)
        if rows.size == 0:
            continue
        mask = np.zeros(p.shape, dtype=p.dtype)
        mask[rows, col[rows]] = 1.0
        term = T.reduce_sum(T.log(T.clip(p, PI_CLAMP, 1.0)) * Tensor(mask)) * (-alpha_weight / rows.size)
        total = term if total is None else total + term
    if total is None:
        return Tensor(np.zeros((), dtype=heads[0].dtype))
    return total


def total_loss(x, labels, outputs: ForwardOutputs, weights: LossWeights = LossWeights()) -> tuple[Tensor, LossParts]:
    """Sum of whichever parts the variant defines (ES: classification only; EU: ELBO only)."""
    recon = kl = cls = None
    if outputs.x_recon is not None:
        recon = reconstruction_nll(x, outputs.x_recon)
        kl = kl_divergence(outputs.mu, outputs.log_var)
    if outputs.pi_heads is not None:
        cls = classification_loss(outputs.pi_heads, labels, weights.alpha_weight)
    total = None
    for part in (recon, None if kl is None else kl * weights.beta_norm, cls):
        if part is not None:
            total = part if total is None else total + part
    return total, LossParts(recon, kl, cls, total)
