"""RMSprop without learning-rate decay or classical momentum."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DimensionError, Tensor


@dataclass
class RmsPropState:
    learning_rate: float
    rho: float = 0.9
    epsilon: float = 1e-7
    accumulators: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[Tensor], learning_rate: float, rho: float = 0.9, epsilon: float = 1e-7):
        return cls(learning_rate, rho, epsilon, [np.zeros_like(p.data) for p in params])


def rmsprop_step(params: list[Tensor], grads: list[np.ndarray | None], state: RmsPropState) -> list[Tensor]:
    """Update ``params`` in place and return them.

    acc <- rho*acc + (1-rho)*g^2 ;  p <- p - lr*g / (sqrt(acc) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.accumulators):
        raise DimensionError(
            f"rmsprop_step: {len(params)} params, {len(grads)} grads, {len(state.accumulators)} accumulators"
        )
    rho, lr, eps = state.rho, state.learning_rate, state.epsilon
    for p, g, acc in zip(params, grads, state.accumulators):
        if g is None:
            continue
        if g.shape != p.shape or acc.shape != p.shape:
            raise DimensionError(f"rmsprop_step: param {p.shape}, grad {g.shape}, accumulator {acc.shape}")
        acc *= rho
        acc += (1 - rho) * g * g
        p.data -= (lr * g / (np.sqrt(acc) + eps)).astype(p.dtype, copy=False)
    return params
