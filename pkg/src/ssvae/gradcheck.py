"""Central finite-difference checks for every differentiable op and the full loss.

The analytic side runs in the working precision under a tape; the numeric
side always evaluates the same expression in float64 without a tape, so the
oracle does not share the backward code it is checking.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import tensor as T
from .losses import LossWeights, total_loss
from .model import ModelSpec, SsVaeModel
from .tensor import Tensor

SINGLE_TOL = 1e-3
DOUBLE_TOL = 1e-6
STEP = 1e-4


@dataclass
class GradCase:
    name: str
    fn: Callable[[list[Tensor]], Tensor]
    make_inputs: Callable[[np.random.Generator], list[np.ndarray]]


@dataclass
class GradResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.max_rel_error) and self.max_rel_error < self.tolerance)


def _weighted_sum(y: Tensor, seed: int = 99) -> Tensor:
    # random weights make every output element matter to the scalar
    w = np.random.default_rng(seed).uniform(0.5, 1.5, size=y.shape).astype(y.dtype)
    return T.reduce_sum(y * Tensor(w))


def _normal(*shape):
    return lambda rng: [rng.standard_normal(shape)]


def _away_from_zero(*shape):
    def make(rng):
        x = rng.uniform(0.2, 2.0, size=shape) * rng.choice([-1.0, 1.0], size=shape)
        return [x]

    return make


def op_cases() -> list[GradCase]:
    return [
        GradCase("matmul", lambda xs: _weighted_sum(T.matmul(xs[0], xs[1])),
                 lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((4, 2))]),
        GradCase("add", lambda xs: _weighted_sum(T.add(xs[0], xs[1])),
                 lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((4,))]),
        GradCase("sub", lambda xs: _weighted_sum(T.sub(xs[0], xs[1])),
                 lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]),
        GradCase("mul", lambda xs: _weighted_sum(T.mul(xs[0], xs[1])),
                 lambda rng: [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]),
        GradCase("relu", lambda xs: _weighted_sum(T.relu(xs[0])), _away_from_zero(3, 5)),
        GradCase("sigmoid", lambda xs: _weighted_sum(T.sigmoid(xs[0])), _normal(3, 5)),
        GradCase("exp", lambda xs: _weighted_sum(T.exp(xs[0])), _normal(3, 5)),
        GradCase("log", lambda xs: _weighted_sum(T.log(xs[0])), lambda rng: [rng.uniform(0.5, 3.0, (3, 5))]),
        GradCase("softplus", lambda xs: _weighted_sum(T.softplus(xs[0])), _normal(3, 5)),
        GradCase("softmax", lambda xs: _weighted_sum(T.softmax(xs[0])), _normal(4, 6)),
        GradCase("clip", lambda xs: _weighted_sum(T.clip(xs[0], -1.0, 1.0)),
                 lambda rng: [np.concatenate([rng.uniform(-0.9, 0.9, (2, 5)), rng.uniform(1.2, 2, (1, 5))])]),
        GradCase("concat", lambda xs: _weighted_sum(T.concat([xs[0], xs[1]], axis=1)),
                 lambda rng: [rng.standard_normal((3, 2)), rng.standard_normal((3, 4))]),
        GradCase("sum_axis0", lambda xs: _weighted_sum(T.reduce_sum(xs[0], axis=0)), _normal(3, 4)),
        GradCase("mean_axis1", lambda xs: _weighted_sum(T.reduce_mean(xs[0], axis=1)), _normal(3, 4)),
        GradCase("mean_all", lambda xs: T.reduce_mean(T.mul(xs[0], xs[0])), _normal(3, 4)),
    ]


E2E_SPEC = ModelSpec(variant="SS", input_dim=6, encoder_widths=(5,), latent_dim=2, num_classes=3, decoder_widths=(4,))


def end_to_end_case(spec: ModelSpec = E2E_SPEC, weights: LossWeights = LossWeights(1.0, 1.0)) -> GradCase:
    """total_loss on a 4-sample batch, two of them labeled, as a function of every parameter."""
    names = [n for n, _ in spec.param_shapes()]
    data_rng = np.random.default_rng(7)
    x = data_rng.uniform(0.05, 0.95, size=(4, spec.input_dim))
    labels = np.array([0, -1, spec.head_sizes[0] - 1, -1])

    def fn(xs: list[Tensor]) -> Tensor:
        model = SsVaeModel(spec, dict(zip(names, xs)))
        out = model.forward(x.astype(xs[0].dtype), rng=123)
        return total_loss(x.astype(xs[0].dtype), labels, out, weights)[0]

    def make(rng):
        init = SsVaeModel.initialize(spec, rng, dtype=np.float64)
        # nonzero biases so no relu unit sits exactly at its kink
        return [p.data + (0.1 * rng.standard_normal(p.shape) if n.endswith("bias") else 0) for n, p in init.params.items()]

    return GradCase("total_loss", fn, make)


def check_case(case: GradCase, double: bool = False, seed: int = 0, step: float = STEP) -> GradResult:
    dtype = np.float64 if double else np.float32
    arrays = [np.asarray(a, dtype=np.float64) for a in case.make_inputs(np.random.default_rng(seed))]

    inputs = [Tensor(a.astype(dtype), requires_grad=True) for a in arrays]
    with T.Tape() as tape:
        loss = case.fn(inputs)
    tape.backward(loss)
    analytic = [np.zeros_like(a) if t.grad is None else t.grad.astype(np.float64) for a, t in zip(arrays, inputs)]

    def f(vals):
        return float(case.fn([Tensor(v) for v in vals]).data)

    worst = 0.0
    for k, base in enumerate(arrays):
        numeric = np.zeros_like(base)
        for idx in np.ndindex(base.shape):
            vals = [a.copy() for a in arrays]
            vals[k][idx] = base[idx] + step
            up = f(vals)
            vals[k][idx] = base[idx] - step
            down = f(vals)
            numeric[idx] = (up - down) / (2 * step)
        scale = max(float(np.abs(numeric).max(initial=0.0)), 1e-3)
        err = float(np.abs(analytic[k] - numeric).max(initial=0.0)) / scale
        worst = max(worst, err)
    return GradResult(case.name, worst, DOUBLE_TOL if double else SINGLE_TOL)


def run_suite(double: bool = False, cases: list[GradCase] | None = None, seeds=(0, 1, 2)) -> list[GradResult]:
    """Check each case over several random inputs; report the worst error per case."""
    cases = cases if cases is not None else op_cases() + [end_to_end_case()]
    results = []
    for case in cases:
        per_seed = [check_case(case, double, seed) for seed in seeds]
        results.append(max(per_seed, key=lambda r: r.max_rel_error))
    return results
