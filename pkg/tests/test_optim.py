import math

import numpy as np
import pytest

from qtsim.errors import ShapeError
from qtsim.optim import Adam, AdamState, adam_step
from qtsim.tensor import Tensor, precision


def scalar_adam(theta, grad_fn, lr, steps, wd=0.0, b1=0.9, b2=0.999, eps=1e-8):
    """Plain-float Adam reference."""
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(theta) + wd * theta
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


@pytest.mark.parametrize("lr, wd", [(0.1, 0.0), (0.05, 0.01), (1e-3, 1e-5)])
def test_fifty_steps_match_scalar_reference(lr, wd):
    grad = lambda th: 2 * (th - 3.0) + math.cos(th)  # noqa: E731
    params = {"w": np.array([0.25])}
    state = AdamState()
    for _ in range(50):
        adam_step(params, {"w": np.array([grad(params["w"][0])])}, state, lr, wd)
    want = scalar_adam(0.25, grad, lr, 50, wd)
    assert abs(params["w"][0] - want) <= 1e-10


def test_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -1.0])}
    adam_step(params, {"w": np.array([0.3, -7.0])}, AdamState(), lr=0.01)
    np.testing.assert_allclose(params["w"], [0.99, -0.99], rtol=1e-6)


def test_zero_learning_rate_leaves_parameters():
    params = {"w": np.array([1.5, 2.5])}
    state = AdamState()
    for _ in range(10):
        adam_step(params, {"w": np.array([1.0, -1.0])}, state, lr=0.0, weight_decay=0.1)
    np.testing.assert_array_equal(params["w"], [1.5, 2.5])


def test_missing_gradient_is_skipped_and_shape_checked():
    params = {"a": np.array([1.0]), "b": np.array([2.0])}
    state = adam_step(params, {"a": np.array([1.0])}, AdamState(), lr=0.1)
    assert params["b"][0] == 2.0 and state.step == 1
    with pytest.raises(ShapeError):
        adam_step(params, {"a": np.ones(2)}, state, lr=0.1)


def test_wrapper_minimises_quadratic():
    with precision("float64"):
        w = Tensor(np.array([[4.0, -3.0]]), requires_grad=True)
        opt = Adam({"w": w}, lr=0.1)
        for _ in range(300):
            opt.zero_grad()
            ((w - 1.0) * (w - 1.0)).sum().backward()
            opt.step()
    np.testing.assert_allclose(w.data, [[1.0, 1.0]], atol=1e-2)
