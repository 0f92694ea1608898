import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TINY_INPUT, TINY_LAYERS, smooth_tiny_case, tiny_loss_and_grad, tiny_params
from tl3dqn import network
from tl3dqn.optimizer import finite_difference_check
from tl3dqn.tensor_nn import init_params


def test_shape_chain_full_size():
    params = init_params(0)
    x = np.random.default_rng(0).random((2, 60, 60, 2)).astype(np.float32)
    q, cache = network.forward(params, x)
    assert cache["conv1"][1].shape == (2, 30, 30, 32)
    assert cache["conv2"][1].shape == (2, 15, 15, 64)
    assert cache["conv3"][1].shape == (2, 15, 15, 128)
    assert cache["fc"][1].shape == (2, 128)
    hv, ha = cache["heads"]
    assert hv.shape == (2, 64) and ha.shape == (2, 64)
    assert cache["value"].shape == (2,)
    assert q.shape == (2, 9)


def test_fresh_net_on_zero_state_is_small_and_finite():
    for dueling in (True, False):
        q, _ = network.forward(init_params(1, dueling=dueling), np.zeros((1, 60, 60, 2), np.float32))
        assert q.shape == (1, 9)
        assert np.all(np.isfinite(q)) and np.all(np.abs(q) < 10)


def test_single_row_equals_batch_row():
    params = tiny_params(3)
    x = np.random.default_rng(1).normal(size=(4,) + TINY_INPUT)
    q_batch, _ = network.forward(params, x, layers=TINY_LAYERS)
    q_one, _ = network.forward(params, x[2:3], layers=TINY_LAYERS)
    np.testing.assert_allclose(q_batch[2], q_one[0], rtol=1e-12, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**20), scale=st.floats(0.1, 20))
def test_dueling_advantage_is_centered(seed, scale):
    rng = np.random.default_rng(seed)
    params = {k: v * scale for k, v in tiny_params(seed).items()}
    params["value_b"] = rng.normal(size=1) * scale
    params["adv_b"] = rng.normal(size=9) * scale
    x = rng.normal(size=(5,) + TINY_INPUT)
    q, cache = network.forward(params, x, layers=TINY_LAYERS)
    centered = (q - cache["value"][:, None]).mean(axis=1)
    assert np.max(np.abs(centered)) < 1e-6 * max(1.0, np.abs(q).max())


def test_no_dueling_has_single_head():
    params = init_params(0, dueling=False)
    assert "value_w" not in params and params["q_w"].shape == (9, 128)
    q, cache = network.forward(params, np.zeros((1, 60, 60, 2), np.float32))
    assert q.shape == (1, 9) and "value" not in cache


def test_gradients_mirror_parameters():
    params = init_params(0)
    x = np.random.default_rng(0).random((3, 60, 60, 2)).astype(np.float32)
    q, cache = network.forward(params, x)
    grads = network.backward(params, cache, np.ones_like(q))
    assert list(grads) == list(params)
    for k in params:
        assert grads[k].shape == params[k].shape


def test_tiny_end_to_end_finite_difference():
    rng = np.random.default_rng(11)
    for dueling in (True, False):
        params, x = smooth_tiny_case(rng, dueling)
        f = tiny_loss_and_grad(x, rng.integers(0, 9, size=4), rng.normal(size=4))
        assert finite_difference_check(f, params) < 1e-4


def test_forward_is_deterministic():
    params = init_params(4)
    x = np.random.default_rng(2).random((2, 60, 60, 2)).astype(np.float32)
    a, _ = network.forward(params, x)
    b, _ = network.forward(params, x)
    np.testing.assert_array_equal(a, b)
