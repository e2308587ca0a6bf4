import numpy as np

from ssvae import gradcheck
from ssvae import tensor as T


def test_suite_passes_single_precision():
    results = gradcheck.run_suite()
    names = {r.name for r in results}
    assert {"matmul", "add", "sub", "mul", "relu", "sigmoid", "exp", "log", "softplus", "softmax",
            "sum_axis0", "mean_axis1", "total_loss"} <= names
    bad = [(r.name, r.max_rel_error) for r in results if not r.ok]
    assert not bad
    assert all(r.tolerance == 1e-3 for r in results)


def test_double_precision_tightens_tolerance():
    results = gradcheck.run_suite(double=True)
    assert all(r.tolerance == 1e-6 for r in results)
    assert all(r.ok for r in results), [(r.name, r.max_rel_error) for r in results if not r.ok]


def wrong_sigmoid(x):
    s = T._sigmoid(x.data)
    return T._record(s, (x,), lambda g: (g * s,))  # missing the (1 - s) factor


def test_injected_wrong_gradient_is_caught(monkeypatch):
    monkeypatch.setattr(T, "sigmoid", wrong_sigmoid)
    results = {r.name: r for r in gradcheck.run_suite(seeds=(0,))}
    assert not results["sigmoid"].ok
    # the decoder's output layer uses sigmoid, so the end-to-end check trips as well
    assert not results["total_loss"].ok
    assert results["matmul"].ok


def test_check_case_reports_worst_relative_error():
    case = gradcheck.GradCase("double", lambda xs: T.reduce_sum(xs[0] * 2.0), lambda rng: [np.ones(3)])
    r = gradcheck.check_case(case)
    assert r.max_rel_error < 1e-6 and r.ok
