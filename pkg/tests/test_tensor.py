import numpy as np
import pytest

from seganet.errors import GraphError, NumericError, ShapeError
from seganet.tensor import Tensor, add, concat_channels, conv2d, make_result, prelu, sigmoid


def test_tensor_casts_non_float_data_to_float32():
    t = Tensor([1, 2, 3])
    assert t.dtype == np.float32
    assert t.dims == [3]


def test_tensor_keeps_float64():
    assert Tensor(np.zeros((2, 2))).dtype == np.float64


def test_tensor_rejects_zero_extent():
    with pytest.raises(ShapeError):
        Tensor(np.zeros((0, 3)))


def test_is_finite_flags_nan():
    assert Tensor([1.0, 2.0]).is_finite()
    assert not Tensor([1.0, np.nan]).is_finite()


def test_backward_on_leaf_sets_grad():
    t = Tensor(np.ones(3), requires_grad=True)
    t.backward()
    np.testing.assert_array_equal(t.grad, np.ones(3))


def test_backward_without_grad_tracking_errors():
    with pytest.raises(GraphError):
        Tensor(np.ones(3)).backward()


def test_second_backward_raises():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    out = add(a, a)
    out.backward()
    with pytest.raises(GraphError):
        out.backward()


def test_gradients_accumulate_on_shared_leaf():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    out = add(a, a)
    out.backward(np.array([1.0, 3.0]))
    np.testing.assert_array_equal(a.grad, [2.0, 6.0])


def test_diamond_graph_sums_both_paths():
    # y = prelu(x) + sigmoid(x): both branches feed the same leaf
    x = Tensor(np.array([[[-1.0, 2.0]]]), requires_grad=True)
    slope = Tensor(np.array([0.25]))
    y = add(prelu(x, slope), sigmoid(x))
    y.backward(np.ones((1, 1, 2)))
    s = 1 / (1 + np.exp(-x.data))
    np.testing.assert_allclose(x.grad, np.array([[[0.25, 1.0]]]) + s * (1 - s), rtol=1e-12)


def test_backward_visits_in_reverse_creation_order():
    order = []

    def tracked(t, tag):
        def factory():
            def back(g):
                order.append(tag)
                return (g,)

            return back

        return make_result(t.data.copy(), tag, (t,), factory)

    x = Tensor(np.ones(2), requires_grad=True)
    y = tracked(tracked(tracked(x, "a"), "b"), "c")
    y.backward()
    assert order == ["c", "b", "a"]


def test_non_finite_upstream_gradient_raises():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    out = sigmoid(x)
    with pytest.raises(NumericError):
        out.backward(np.full((1, 1, 2, 2), np.nan))


def test_seed_gradient_shape_checked():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        sigmoid(x).backward(np.ones(3))


def test_no_graph_recorded_without_grad():
    out = conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 1, 1))))
    assert out.node is None and not out.requires_grad


def test_mixed_dtypes_rejected():
    with pytest.raises(TypeError):
        add(Tensor(np.ones(2, np.float32)), Tensor(np.ones(2, np.float64)))


def test_detach_drops_graph():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    d = sigmoid(x).detach()
    assert d.node is None and not d.requires_grad


def test_concat_requires_matching_spatial_dims():
    with pytest.raises(ShapeError):
        concat_channels(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 2))))
