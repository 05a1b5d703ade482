import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from prodcat import autodiff as ad
from prodcat.autodiff import Tensor, backward, gradient_check, no_grad
from prodcat.utils.errors import NumericalError, ShapeError

TOL = 1e-6


def _rand(rng, *shape):
    return rng.normal(size=shape)


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul])
def test_binary_ops_with_leading_broadcast(rng, op):
    a, b = _rand(rng, 3, 4), _rand(rng, 4)
    assert gradient_check(lambda x, y: ad.reduce_sum(op(x, y) * op(x, y)), [a, b]) < TOL


def test_div_gradient(rng):
    a, b = _rand(rng, 2, 3), rng.uniform(1.0, 2.0, size=(2, 3))
    assert gradient_check(lambda x, y: ad.reduce_sum(ad.div(x, y)), [a, b]) < TOL


@pytest.mark.parametrize("fn", [ad.exp, ad.sigmoid, ad.tanh, ad.neg, lambda t: ad.power(t, 2.0)])
def test_unary_gradients(rng, fn):
    assert gradient_check(lambda x: ad.reduce_sum(fn(x)), _rand(rng, 3, 2)) < TOL


def test_log_gradient(rng):
    assert gradient_check(lambda x: ad.reduce_sum(ad.log(x)), rng.uniform(0.5, 2.0, size=5)) < TOL


def test_relu_gradient_away_from_kink():
    x = np.array([-1.5, -0.3, 0.4, 2.0])
    assert gradient_check(lambda t: ad.reduce_sum(ad.relu(t) * ad.relu(t)), x) < TOL


@pytest.mark.parametrize("exponent,expected", [(0.0, [0.0, 0.0]), (0.5, [0.0, 0.25]), (2.0, [0.0, 8.0])])
def test_power_gradient_at_zero_base(exponent, expected):
    x = Tensor(np.array([0.0, 4.0]), requires_grad=True)
    backward(ad.reduce_sum(ad.power(x, exponent)))
    np.testing.assert_allclose(x.grad, expected)


def test_clip_gradient_is_zero_where_clamped():
    x = Tensor(np.array([-2.0, 0.5, 3.0]), requires_grad=True)
    backward(ad.reduce_sum(ad.clip(x, -1.0, 1.0)))
    np.testing.assert_array_equal(x.grad, [0.0, 1.0, 0.0])


def test_matmul_gradients(rng):
    assert gradient_check(lambda a, b: ad.reduce_sum(ad.tanh(a @ b)), [_rand(rng, 2, 3, 4), _rand(rng, 4, 5)]) < TOL
    assert gradient_check(lambda a, b: ad.reduce_sum(a @ b), [_rand(rng, 3), _rand(rng, 3, 2)]) < TOL
    assert gradient_check(lambda a, b: ad.reduce_sum(ad.sigmoid(a @ b)),
                          [_rand(rng, 2, 3, 4), _rand(rng, 2, 4, 2)]) < TOL


def test_matmul_shape_errors(rng):
    with pytest.raises(ShapeError):
        Tensor(_rand(rng, 2, 3)) @ Tensor(_rand(rng, 4, 2))
    with pytest.raises(ShapeError):
        Tensor(_rand(rng, 2, 3)) @ Tensor(_rand(rng, 3))


def test_elementwise_shape_error(rng):
    with pytest.raises(ShapeError):
        Tensor(_rand(rng, 3, 4)) + Tensor(_rand(rng, 3))


def test_softmax_and_log_softmax_gradients(rng):
    weights = _rand(rng, 2, 4)
    assert gradient_check(lambda x: ad.reduce_sum(ad.softmax(x, axis=-1) * weights), _rand(rng, 2, 4)) < TOL
    assert gradient_check(lambda x: ad.reduce_sum(ad.log_softmax(x, axis=-1) * weights), _rand(rng, 2, 4)) < TOL


def test_masked_softmax_zeroes_masked_positions(rng):
    mask = np.array([[True, False, True], [False, False, False]])
    out = ad.softmax(Tensor(_rand(rng, 2, 3)), axis=-1, mask=mask).data
    assert out[0, 1] == 0.0
    assert out[0].sum() == pytest.approx(1.0)
    np.testing.assert_array_equal(out[1], [0.0, 0.0, 0.0])


def test_structure_ops_gradients(rng):
    assert gradient_check(lambda x: ad.reduce_sum(ad.transpose(x, (1, 2, 0)) * ad.transpose(x, (1, 2, 0))),
                          _rand(rng, 2, 3, 4)) < TOL
    assert gradient_check(lambda x: ad.reduce_sum(ad.sigmoid(ad.reshape(x, (3, 4)))), _rand(rng, 2, 6)) < TOL
    assert gradient_check(lambda a, b: ad.reduce_sum(ad.tanh(ad.concat([a, b], axis=1))),
                          [_rand(rng, 2, 3), _rand(rng, 2, 2)]) < TOL


def test_indexing_gradients(rng):
    assert gradient_check(lambda x: ad.reduce_sum(ad.tanh(x[1:, ::2])), _rand(rng, 3, 4)) < TOL
    rows = np.array([0, 2, 0])
    assert gradient_check(lambda x: ad.reduce_sum(ad.sigmoid(x[rows])), _rand(rng, 3, 2)) < TOL
    targets = np.array([1, 0, 2])
    assert gradient_check(lambda x: ad.reduce_sum(ad.exp(ad.take_along_last(x, targets))), _rand(rng, 3, 3)) < TOL


def test_embedding_lookup_never_updates_padding_row(rng):
    matrix = Tensor(_rand(rng, 4, 3), requires_grad=True)
    ids = np.array([[2, 0, 3], [0, 0, 2]])
    backward(ad.reduce_sum(ad.embedding_lookup(matrix, ids, padding_idx=0)))
    np.testing.assert_array_equal(matrix.grad[0], np.zeros(3))
    np.testing.assert_array_equal(matrix.grad[2], np.full(3, 2.0))
    with pytest.raises(ShapeError):
        ad.embedding_lookup(matrix, np.array([[4]]))


def test_reduction_gradients(rng):
    assert gradient_check(lambda x: ad.reduce_mean(x * x), _rand(rng, 3, 4)) < TOL
    assert gradient_check(lambda x: ad.reduce_sum(ad.tanh(ad.reduce_sum(x, axis=1))), _rand(rng, 3, 4)) < TOL
    mask = np.array([[True, True, False], [True, False, False]])
    assert gradient_check(lambda x: ad.reduce_sum(ad.tanh(ad.masked_mean(x, mask, axis=1))),
                          _rand(rng, 2, 3, 2)) < TOL


def test_masked_mean_ignores_masked_steps():
    x = Tensor(np.array([[[1.0], [3.0], [100.0]]]))
    out = ad.masked_mean(x, np.array([[True, True, False]]), axis=1)
    np.testing.assert_allclose(out.data, [[2.0]])


def test_layer_norm_gradients(rng):
    point = [_rand(rng, 2, 5), rng.uniform(0.5, 1.5, size=5), _rand(rng, 5)]
    weights = _rand(rng, 2, 5)
    assert gradient_check(lambda x, g, b: ad.reduce_sum(ad.layer_norm(x, g, b) * weights), point,
                          tolerance=1e-5) < 1e-5


def test_where_routes_gradients():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0, 4.0]), requires_grad=True)
    backward(ad.reduce_sum(ad.where(np.array([True, False]), a, b)))
    np.testing.assert_array_equal(a.grad, [1.0, 0.0])
    np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_shared_subexpression_accumulates():
    x = Tensor(np.array(3.0), requires_grad=True)
    y = x * x + x
    backward(y)
    assert x.grad == pytest.approx(7.0)


def test_dropout_is_identity_at_inference_and_scales_in_training():
    x = Tensor(np.ones((200, 10)))
    assert ad.dropout(x, 0.5, rng=0, train=False) is x
    out = ad.dropout(x, 0.5, rng=0).data
    assert set(np.unique(out)) <= {0.0, 2.0}
    spatial = ad.dropout(Tensor(np.ones((4, 6, 3))), 0.5, rng=1, noise_shape=(4, 1, 3)).data
    assert np.all(spatial == spatial[:, :1, :])


def test_no_grad_records_nothing():
    x = Tensor(np.array([1.0]), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert y.is_leaf


def test_backward_needs_scalar(rng):
    x = Tensor(_rand(rng, 3), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_non_finite_values_raise():
    with pytest.raises(NumericalError):
        ad.exp(Tensor(np.array([1000.0])))
    with pytest.raises(NumericalError):
        ad.log(Tensor(np.array([0.0])))


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=2, max_side=5),
                  elements=st.floats(-50, 50, allow_nan=False)))
def test_softmax_rows_sum_to_one(values):
    probs = ad.softmax(Tensor(values), axis=-1).data
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0)
    assert np.all(probs >= 0)


@given(hnp.arrays(np.float64, st.integers(1, 6), elements=st.floats(-5, 5, allow_nan=False)))
def test_tanh_gradient_property(values):
    assert gradient_check(lambda x: ad.reduce_sum(ad.tanh(x)), values, floor=1e-6) < 1e-5
