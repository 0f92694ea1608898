import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tl3dqn.optimizer import AdamState, DivergenceError, adam_step, finite_difference_check, mse_loss
from tl3dqn.tensor_nn import fc_backward, fc_forward

floats = st.floats(-1e3, 1e3, allow_nan=False)


def test_mse_examples():
    r = mse_loss([3.0], [3.0])
    assert r.loss == 0.0 and list(r.deltas) == [0.0]
    r = mse_loss([1.0, 2.0], [3.0, 2.0])
    assert r.loss == 2.0
    assert list(r.deltas) == [2.0, 0.0]
    assert list(r.dpred) == [-2.0, 0.0]


@given(st.lists(st.tuples(floats, floats), min_size=1, max_size=20))
def test_mse_symmetries(pairs):
    pred, target = map(np.array, zip(*pairs))
    base = mse_loss(pred, target)
    assert base.loss >= 0 and np.all(base.deltas >= 0)
    assert mse_loss(-pred, -target).loss == pytest.approx(base.loss)
    assert mse_loss(target, pred).loss == pytest.approx(base.loss)
    assert base.loss == pytest.approx(np.mean((pred - target) ** 2))


def test_mse_rejects_bad_batches():
    with pytest.raises(ValueError):
        mse_loss([], [])
    with pytest.raises(ValueError):
        mse_loss([1.0, 2.0], [1.0])


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0])
    assert state.t == 1


def test_adam_first_step_by_hand():
    params = {"theta": np.array([0.0])}
    state = AdamState.for_params(params, lr=1e-4, delta=1e-8, rho_s=0.9, rho_r=0.999)
    adam_step(params, {"theta": np.array([0.5])}, state)
    # s = 0.05, r = 0.00025; bias-corrected 0.5 and 0.25
    expected = -1e-4 * 0.5 / math.sqrt(0.25 + 1e-8)
    assert params["theta"][0] == pytest.approx(expected, rel=1e-12)
    assert params["theta"][0] == pytest.approx(-1.0e-4, rel=1e-6)


def test_adam_second_step_close_to_first():
    params = {"theta": np.array([0.0])}
    state = AdamState.for_params(params)
    adam_step(params, {"theta": np.array([0.5])}, state)
    first = params["theta"][0]
    adam_step(params, {"theta": np.array([0.5])}, state)
    second = params["theta"][0] - first
    assert abs(abs(second) - abs(first)) <= 0.05 * abs(first)


def test_adam_monotone_on_quadratic():
    params = {"theta": np.array([1.0])}
    state = AdamState.for_params(params, lr=0.01)
    losses = [1.0]
    for _ in range(100):
        adam_step(params, {"theta": 2 * params["theta"]}, state)
        losses.append(float(params["theta"][0] ** 2))
    windows = losses[::10]
    assert all(b < a for a, b in zip(windows, windows[1:]))


def test_adam_state_mirrors_params():
    params = {"a": np.zeros((2, 3), np.float32), "b": np.zeros(4, np.float32)}
    state = AdamState.for_params(params)
    rng = np.random.default_rng(0)
    for _ in range(3):
        adam_step(params, {k: rng.normal(size=v.shape).astype(np.float32) for k, v in params.items()}, state)
    for k in params:
        assert state.s[k].shape == params[k].shape and state.r[k].shape == params[k].shape
        assert np.all(state.r[k] >= 0)
    assert state.t == 3


def test_adam_refuses_non_finite_gradient():
    params = {"w": np.zeros(2)}
    state = AdamState.for_params(params)
    with pytest.raises(DivergenceError):
        adam_step(params, {"w": np.array([1.0, np.nan])}, state)
    assert state.t == 0
    np.testing.assert_array_equal(params["w"], 0.0)


def test_fd_exact_for_quadratic():
    def loss_and_grad(p):
        return float((3.0 * p["w"][0] - 1.0) ** 2), {"w": np.array([6.0 * (3.0 * p["w"][0] - 1.0)])}

    assert finite_difference_check(loss_and_grad, {"w": np.array([0.7])}) < 1e-8


def _head_case(seed, flip=False):
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(5, 64))
    targets = rng.normal(size=5)
    actions = rng.integers(0, 9, size=5)
    rows = np.arange(5)

    def loss_and_grad(p):
        q = fc_forward(h, p["w"], p["b"])
        r = mse_loss(q[rows, actions], targets)
        dq = np.zeros_like(q)
        dq[rows, actions] = -r.dpred if flip else r.dpred
        _, dw, db = fc_backward(h, p["w"], dq)
        return r.loss, {"w": dw, "b": db}

    return loss_and_grad, {"w": rng.normal(scale=0.1, size=(9, 64)), "b": np.zeros(9)}


def test_fd_on_random_head():
    f, params = _head_case(0)
    assert finite_difference_check(f, params) < 1e-4


def test_fd_detects_sign_flip():
    f, params = _head_case(0, flip=True)
    assert finite_difference_check(f, params) == pytest.approx(2.0, abs=1e-3)
