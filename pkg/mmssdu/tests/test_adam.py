from __future__ import annotations

import numpy as np
import pytest

from mmssdu.errors import DimensionError, TrainingError
from mmssdu.nn.adam import adam_step, init_adam


def test_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -2.0, 0.5])}
    grads = {"w": np.array([0.3, -4.0, 1e-3])}
    new, state = adam_step(params, grads, init_adam(params), lr=0.01)
    np.testing.assert_allclose(new["w"] - params["w"], -0.01 * np.sign(grads["w"]), rtol=1e-4)
    assert state.t == 1


def test_two_steps_match_reference_update():
    params = {"w": np.array([0.5, 1.0])}
    g1, g2 = np.array([0.2, -0.1]), np.array([-0.4, 0.3])
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p1, s1 = adam_step(params, {"w": g1}, init_adam(params), lr, b1, b2, eps)
    p2, s2 = adam_step(p1, {"w": g2}, s1, lr, b1, b2, eps)

    m = (1 - b1) * g1
    v = (1 - b2) * g1**2
    w = params["w"] - lr * (m / (1 - b1)) / (np.sqrt(v / (1 - b2)) + eps)
    m = b1 * m + (1 - b1) * g2
    v = b2 * v + (1 - b2) * g2**2
    w = w - lr * (m / (1 - b1**2)) / (np.sqrt(v / (1 - b2**2)) + eps)
    np.testing.assert_allclose(p2["w"], w, rtol=1e-14)
    assert s2.t == 2


def test_zero_learning_rate_leaves_params_unchanged():
    params = {"w": np.ones(3), "mu": np.asarray(0.05)}
    new, _ = adam_step(params, {"w": np.ones(3), "mu": np.asarray(2.0)}, init_adam(params), lr=0.0)
    np.testing.assert_array_equal(new["w"], params["w"])
    assert float(new["mu"]) == 0.05


def test_parameters_without_gradient_stay_put():
    params = {"w": np.ones(2), "mu": np.asarray(0.05)}
    new, state = adam_step(params, {"w": np.ones(2)}, init_adam(params), lr=0.1)
    assert new["mu"] is params["mu"]
    assert not np.any(state.m["mu"])


def test_bad_gradients_rejected():
    params = {"w": np.ones(2)}
    state = init_adam(params)
    with pytest.raises(DimensionError):
        adam_step(params, {"v": np.ones(2)}, state)
    with pytest.raises(DimensionError):
        adam_step(params, {"w": np.ones(3)}, state)
    with pytest.raises(TrainingError) as info:
        adam_step(params, {"w": np.array([1.0, np.nan])}, state)
    assert info.value.parameter == "w"
    assert info.value.iteration == 1


def test_adam_minimizes_quadratic():
    params = {"w": np.array([0.0, 10.0])}
    state = init_adam(params)
    for _ in range(3000):
        params, state = adam_step(params, {"w": 2 * (params["w"] - 3.0)}, state, lr=0.05)
    np.testing.assert_allclose(params["w"], [3.0, 3.0], atol=5e-2)
