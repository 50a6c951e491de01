import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from posecast import autodiff as ad
from posecast.autodiff import ShapeError, Tensor
from posecast.gradcheck import check_function, numeric_grad, op_suite, rel_err

floats = st.floats(-3, 3, allow_nan=False, width=64)


def test_every_op_matches_finite_differences():
    for r in op_suite(n=20, seed=7):
        assert r.passed, r.line()


def test_reverse_operands_with_numpy_left():
    x = Tensor(np.ones((3, 3)), requires_grad=True)
    y = np.eye(3) + x
    assert isinstance(y, Tensor)
    z = 2.0 * (np.ones(3) @ x)
    ad.backward(ad.sum(z))
    np.testing.assert_allclose(x.grad, 2.0)


def test_shared_subexpression_accumulates():
    x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
    y = x * x
    ad.backward(ad.sum(y + y * x))
    np.testing.assert_allclose(x.grad, 2 * x.value + 3 * x.value ** 2)


def test_backward_needs_scalar():
    with pytest.raises(ShapeError):
        ad.backward(Tensor(np.ones(3), requires_grad=True) * 2)


def test_shape_errors_are_raised():
    with pytest.raises(ShapeError):
        ad.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))
    with pytest.raises(ShapeError):
        ad.concat([Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))], axis=1)


def test_leaf_grads_accumulate_across_calls():
    x = Tensor(np.array(2.0), requires_grad=True)
    ad.backward(x * 3.0)
    ad.backward(x * 3.0)
    assert x.grad == 6.0
    x.zero_grad()
    assert x.grad is None


def test_constants_record_no_graph():
    y = ad.tanh(Tensor(np.ones(4))) * 2
    assert not y.requires_grad and y.parents == ()


def test_unused_leaf_gets_zero_grad():
    a = Tensor(np.ones(2), requires_grad=True)
    b = Tensor(np.ones(2), requires_grad=True)
    g = ad.grad_of(lambda a, b: ad.sum(a * 2), a.value, b.value)
    np.testing.assert_array_equal(g[1], 0.0)


def test_softmax_is_stable_for_large_logits():
    y = ad.softmax(Tensor(np.array([1000.0, 0.0, -1000.0])))
    assert np.all(np.isfinite(y.value))
    assert y.value[0] == pytest.approx(1.0)


def test_sigmoid_extreme_values_finite():
    y = ad.sigmoid(Tensor(np.array([-800.0, 800.0])))
    np.testing.assert_array_equal(y.value, [0.0, 1.0])


@given(hnp.arrays(np.float64, (3, 4), elements=floats), hnp.arrays(np.float64, (4,), elements=floats))
def test_broadcast_add_gradient_sums_over_broadcast_axis(a, b):
    ga, gb = ad.grad_of(lambda x, y: ad.sum(x + y), a, b)
    np.testing.assert_array_equal(ga, np.ones_like(a))
    np.testing.assert_array_equal(gb, np.full(4, 3.0))


@given(hnp.arrays(np.float64, (2, 3), elements=floats), hnp.arrays(np.float64, (3, 2), elements=floats))
def test_matmul_gradient_is_exact_for_bilinear_form(a, b):
    ga, gb = ad.grad_of(lambda x, y: ad.sum(ad.matmul(x, y)), a, b)
    np.testing.assert_allclose(ga, np.ones((2, 2)) @ b.T)
    np.testing.assert_allclose(gb, a.T @ np.ones((2, 2)))


def test_fancy_index_scatter_adds_repeats():
    x = np.arange(4.0)
    (g,) = ad.grad_of(lambda t: ad.sum(t[np.array([1, 1, 3])]), x)
    np.testing.assert_array_equal(g, [0, 2, 0, 1])


def test_numeric_grad_helper_on_quadratic():
    g = numeric_grad(lambda v: float(np.sum(v ** 2)), np.array([1.0, -2.0, 0.5]))
    np.testing.assert_allclose(g, [2.0, -4.0, 1.0], atol=1e-8)
    assert rel_err(g, g) == 0.0


def test_check_function_flags_a_wrong_gradient(rng):
    def bad_square(a):
        # value of a^2 but gradient of a (wrong on purpose)
        return ad._node(a.value ** 2, (a,), "bad", lambda g: ad._accum(a, g))
    assert check_function(bad_square, [rng.normal(size=5)], rng) > 1e-2
