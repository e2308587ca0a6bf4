import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssvae import tensor as T
from ssvae.errors import ContractError, DimensionError, DomainError
from ssvae.gradcheck import GradCase, check_case
from ssvae.tensor import Tape, Tensor


def grads_of(fn, *arrays):
    leaves = [Tensor(np.asarray(a, dtype=np.float32), requires_grad=True) for a in arrays]
    with Tape() as tape:
        loss = fn(*leaves)
    tape.backward(loss)
    return [leaf.grad for leaf in leaves]


# -- forward values ------------------------------------------------------------


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(T.matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_hand_value():
    assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_grad_is_ones_times_b_transpose():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))
    ga, gb = grads_of(lambda x, y: T.reduce_sum(T.matmul(x, y)), a, b)
    np.testing.assert_allclose(ga, np.ones((3, 2)) @ b.T, rtol=1e-5)
    np.testing.assert_allclose(gb, a.T @ np.ones((3, 2)), rtol=1e-5)


def test_relu_and_sigmoid_values():
    assert T.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert T.sigmoid(Tensor([0.0])).data.tolist() == [0.5]


def test_sigmoid_grad_at_zero():
    (g,) = grads_of(lambda x: T.reduce_sum(T.sigmoid(x)), [0.0])
    assert g[0] == pytest.approx(0.25)
    # and the finite-difference oracle agrees
    res = check_case(GradCase("sigmoid0", lambda xs: T.reduce_sum(T.sigmoid(xs[0])), lambda rng: [np.zeros(1)]))
    assert res.ok


def test_log_rejects_nonpositive():
    with pytest.raises(DomainError):
        T.log(Tensor([1.0, 0.0]))
    with pytest.raises(DomainError):
        T.elementwise("log", Tensor([-2.0]))


def test_binary_shape_mismatch():
    with pytest.raises(DimensionError):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_elementwise_dispatch_and_unknown():
    np.testing.assert_allclose(T.elementwise("exp", Tensor([0.0, 1.0])).data, [1.0, np.e], rtol=1e-6)
    np.testing.assert_allclose(T.elementwise("mul", Tensor([2.0]), Tensor([3.0])).data, [6.0])
    with pytest.raises(ValueError):
        T.elementwise("tanh", Tensor([0.0]))


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-7)
    np.testing.assert_allclose(T.softmax(Tensor([[1000.0, 0.0, 0.0]])).data, [[1, 0, 0]], atol=1e-6)
    # direct evaluation of e^x / sum e^x in float64
    x = np.array([1.0, 2.0, 3.0])
    expected = np.exp(x) / np.exp(x).sum()
    np.testing.assert_allclose(T.softmax(Tensor([x])).data[0], expected, atol=1e-6)
    np.testing.assert_allclose(expected, [0.09003, 0.24473, 0.66524], atol=1e-5)


def test_softmax_needs_matrix():
    with pytest.raises(DimensionError):
        T.softmax(Tensor([1.0, 2.0]))


def test_reduce_examples():
    x = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert float(T.reduce("sum", x).data) == 10.0
    assert T.reduce("mean", x, axis=0).data.tolist() == [2.0, 3.0]
    (g,) = grads_of(lambda t: T.reduce_sum(t), [[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(g, np.ones((2, 2)))
    with pytest.raises(DimensionError):
        T.reduce_sum(x, axis=2)


def test_backward_examples():
    (g,) = grads_of(lambda w: T.reduce_sum(w), [3.0, -2.0, 5.0])
    np.testing.assert_array_equal(g, [1, 1, 1])
    (g,) = grads_of(lambda w: T.reduce_sum(T.relu(w)), [-1.0, 1.0])
    np.testing.assert_array_equal(g, [0, 1])


def test_backward_rejects_nonscalar():
    w = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = w * 2.0
    with pytest.raises(ContractError):
        tape.backward(y)


def test_fan_out_accumulates():
    # loss = sum(w * w + w): grad 2w + 1 requires adding both uses of w
    (g,) = grads_of(lambda w: T.reduce_sum(w * w + w), [1.0, -3.0])
    np.testing.assert_allclose(g, [3.0, -5.0])


def test_broadcast_bias_grad_sums_rows():
    (gx, gb) = grads_of(lambda x, b: T.reduce_sum(x + b), np.ones((4, 3)), np.zeros(3))
    np.testing.assert_array_equal(gb, [4, 4, 4])


def test_no_tape_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    y = T.exp(w)
    assert T.active_tape() is None
    assert y.requires_grad


def test_clip_zero_grad_outside():
    (g,) = grads_of(lambda x: T.reduce_sum(T.clip(x, -1.0, 1.0)), [-2.0, 0.0, 3.0])
    np.testing.assert_array_equal(g, [0, 1, 0])


def test_concat_grad_splits():
    ga, gb = grads_of(lambda a, b: T.reduce_sum(T.concat([a, b], axis=1) * Tensor([[1.0, 2.0, 3.0]])),
                      [[0.0]], [[0.0, 0.0]])
    assert ga.tolist() == [[1.0]] and gb.tolist() == [[2.0, 3.0]]


# -- properties ----------------------------------------------------------------

finite = st.floats(-1e3, 1e3, allow_nan=False, width=32)


@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    p = T.softmax(Tensor(x)).data
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


@given(arrays(np.float32, st.integers(1, 20), elements=st.floats(-50, 50, width=32)))
def test_forward_ops_stay_finite(x):
    t = Tensor(x)
    for op in (T.relu, T.sigmoid, T.softplus, T.exp):
        assert np.all(np.isfinite(op(t).data))
    assert np.all((T.sigmoid(t).data >= 0) & (T.sigmoid(t).data <= 1))


@given(st.integers(0, 2**31 - 1))
def test_backward_is_bitwise_deterministic(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((3, 4)), rng.standard_normal((4, 2))

    def loss(x, y):
        return T.reduce_mean(T.softplus(T.matmul(x, y)) * T.sigmoid(T.matmul(x, y)))

    g1 = grads_of(loss, a, b)
    g2 = grads_of(loss, a, b)
    for u, v in zip(g1, g2):
        assert u.tobytes() == v.tobytes()


@given(st.integers(0, 10_000))
def test_random_composite_graph_matches_finite_differences(seed):
    """Randomized two-layer graphs built from the op set agree with central differences."""
    rng = np.random.default_rng(seed)
    acts = [T.relu, T.sigmoid, T.softplus, T.exp]
    f1, f2 = acts[rng.integers(len(acts))], acts[rng.integers(len(acts))]

    def fn(xs):
        h = f1(T.matmul(xs[0], xs[1]) + xs[2])
        return T.reduce_mean(T.softmax(T.matmul(h, xs[3]) * 0.5) * f2(T.matmul(h, xs[3]) * 0.1))

    def make(r):
        return [r.standard_normal((3, 4)) * 0.5, r.standard_normal((4, 5)) * 0.5,
                r.uniform(0.1, 0.5, 5), r.standard_normal((5, 3)) * 0.5]

    # central differences are meaningless across a relu kink
    x0, x1, b, w = make(np.random.default_rng(seed))
    pre = x0 @ x1 + b
    if f1 is T.relu:
        assume(np.abs(pre).min() > 1e-2)
    if f2 is T.relu:
        h = f1(Tensor(pre)).data
        assume(np.abs(h @ w).min() > 1e-2)
    assert check_case(GradCase("random", fn, make), seed=seed).max_rel_error < 1e-3
