import numpy as np
import pytest

from smoothfeed.nn import (Dense, GraphError, Mul, Node, ShapeError, SumAll,
                           backward, constant)


def test_square_gradient():
    # loss = w^2 at w=3 -> d/dw = 6
    w = constant(np.array([3.0], dtype=np.float64), dtype=np.float64)
    loss = SumAll()(Mul()(w, w))
    backward(loss)
    assert np.allclose(w.grad, [6.0])


def test_constant_loss_leaves_gradients_zero():
    rng = np.random.default_rng(0)
    layer = Dense("d", 3, 2, rng)
    loss = constant(np.float32(1.5))
    backward(loss)
    assert np.all(layer.w.grad == 0)
    assert np.all(layer.b.grad == 0)


def test_backward_rejects_non_scalar_loss():
    x = constant(np.ones(3, dtype=np.float32))
    with pytest.raises(ShapeError):
        backward(x)


def test_cycle_detection():
    a = constant(np.ones(2, dtype=np.float32))
    b = Mul()(a, a)
    c = SumAll()(b)
    b.inputs = (c, a)  # manufacture a cycle
    with pytest.raises(GraphError):
        backward(c)


def test_gradient_accumulates_over_shared_input():
    x = constant(np.array([2.0], dtype=np.float64), dtype=np.float64)
    y = Mul()(x, x)        # x^2
    loss = SumAll()(Mul()(y, x))  # x^3 -> grad 3x^2 = 12
    backward(loss)
    assert np.allclose(x.grad, [12.0])


def test_dense_shape_error():
    rng = np.random.default_rng(1)
    layer = Dense("d", 4, 2, rng)
    with pytest.raises(ShapeError):
        layer(constant(np.ones((3, 5), dtype=np.float32)))


def test_backward_twice_accumulates_param_grads():
    rng = np.random.default_rng(2)
    layer = Dense("d", 2, 1, rng)
    x = constant(np.ones((1, 2), dtype=np.float32))
    backward(SumAll()(layer(x)))
    g1 = layer.w.grad.copy()
    backward(SumAll()(layer(x)))
    assert np.allclose(layer.w.grad, 2 * g1)
