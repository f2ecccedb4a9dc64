import numpy as np
import pytest

from lgdml import tape
from lgdml.trainer import finite_difference_gradient, max_relative_error

rng = np.random.default_rng(42)


def check_op(build, x0, tol=1e-6):
    """FD-check d(sum(W * op(x)))/dx; the random weights W keep the
    functional non-degenerate (a plain sum of a softmax is constant)."""
    w = np.random.default_rng(7).normal(size=build(tape.leaf(x0)).value.shape)

    def f(x):
        return float(tape.total_sum(tape.mul(build(tape.leaf(x)), tape.Var(w))).value)

    v = tape.leaf(x0)
    out = tape.total_sum(tape.mul(build(v), tape.Var(w)))
    (g,) = tape.grad_of(out, [v])
    g_fd = finite_difference_gradient(f, x0)
    assert max_relative_error(g, g_fd) <= tol, build


def test_elementwise_ops():
    x = rng.normal(size=(4, 5)) + 3.0  # positive for log/power
    c = rng.normal(size=(4, 5))
    check_op(lambda v: tape.add(v, tape.Var(c)), x)
    check_op(lambda v: tape.sub(tape.mul(v, v), v), x)
    check_op(lambda v: tape.scale(v, -2.5), x)
    check_op(tape.exp, x * 0.1)
    check_op(tape.log, x)
    check_op(tape.log1p, x)
    check_op(tape.reciprocal, x)
    check_op(lambda v: tape.power_const(v, 0.75), x)
    check_op(lambda v: tape.power_const(v, 2.0), x)


def test_power_zero_is_constant():
    v = tape.leaf(np.array([[0.0, 2.0]]))
    out = tape.total_sum(tape.power_const(v, 0.0))
    np.testing.assert_array_equal(out.value, 2.0)
    (g,) = tape.grad_of(out, [v])
    np.testing.assert_array_equal(g, np.zeros((1, 2)))


def test_clamp_ops():
    x = rng.normal(size=(5, 5))
    check_op(lambda v: tape.maximum_const(v, 0.1), x)
    check_op(lambda v: tape.clip(v, -0.5, 0.5), x)
    mask = rng.random((5, 5)) < 0.4
    check_op(lambda v: tape.masked_fill(v, mask, 9.0), x)


def test_linalg_ops():
    x = rng.normal(size=(4, 6))
    c = rng.normal(size=(6, 3))
    check_op(lambda v: tape.matmul(v, tape.leaf(c)), x)
    check_op(lambda v: tape.matmul_const(v, c), x)
    check_op(tape.transpose, x)
    check_op(tape.rownorm, x)
    check_op(tape.self_cosine, x)
    check_op(tape.pairwise_euclidean, x, tol=1e-5)


def test_distribution_ops():
    x = rng.normal(size=(4, 6))
    check_op(lambda v: tape.softmax_rows(v, 0.7), x)
    check_op(lambda v: tape.logsoftmax_rows(v, 0.7), x)


def test_reduction_and_gather_ops():
    x = rng.normal(size=(5, 5))
    check_op(tape.total_mean, x)
    check_op(tape.sum_rows, x)
    mask = rng.random((5, 5)) < 0.5
    check_op(lambda v: tape.masked_sum_rows(v, mask), x)
    check_op(tape.diag, x)
    rows = np.array([0, 1, 1, 4])
    cols = np.array([2, 2, 3, 0])
    check_op(lambda v: tape.take_pairs(v, rows, cols), x)
    check_op(lambda v: tape.reshape(v, (1, 25)), x)


def test_shared_node_accumulates():
    # diamond: y = sum(x*x) + sum(x) reaches x through two paths
    x0 = rng.normal(size=(3, 3))
    v = tape.leaf(x0)
    out = tape.add(tape.total_sum(tape.mul(v, v)), tape.total_sum(v))
    (g,) = tape.grad_of(out, [v])
    np.testing.assert_allclose(g, 2 * x0 + 1, atol=1e-12)


def test_backward_requires_scalar():
    v = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ValueError):
        tape.backward(tape.mul(v, v))


def test_unreached_leaf_gets_zero_grad():
    a = tape.leaf(np.ones((2, 2)))
    b = tape.leaf(np.ones((2, 2)))
    out = tape.total_sum(a)
    ga, gb = tape.grad_of(out, [a, b])
    np.testing.assert_array_equal(ga, np.ones((2, 2)))
    np.testing.assert_array_equal(gb, np.zeros((2, 2)))


def test_pairwise_euclidean_zero_distance_safe():
    # identical rows produce a zero distance; gradient must stay finite
    x0 = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    v = tape.leaf(x0)
    out = tape.total_sum(tape.pairwise_euclidean(v))
    (g,) = tape.grad_of(out, [v])
    assert np.all(np.isfinite(g))
