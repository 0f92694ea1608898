import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import naive_conv
from tl3dqn.optimizer import finite_difference_check
from tl3dqn.tensor_nn import (
    CONV1,
    CONV2,
    CONV3,
    ConvSpec,
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    init_params,
    leaky_relu,
    leaky_relu_backward,
    param_shapes,
)


conv_specs = st.builds(
    lambda f, fh, fw, sh, sw, pads: ConvSpec(f, fh, fw, sh, sw, *pads),
    st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 2), st.integers(1, 2),
    st.tuples(*[st.integers(0, 1)] * 4),
)


def test_full_size_layer_shapes():
    x = np.zeros((60, 60, 2), dtype=np.float32)
    params = init_params(0)
    a = conv2d_forward(x, params["conv1_w"], params["conv1_b"], CONV1)
    assert a.shape == (30, 30, 32)
    a = conv2d_forward(a, params["conv2_w"], params["conv2_b"], CONV2)
    assert a.shape == (15, 15, 64)
    a = conv2d_forward(a, params["conv3_w"], params["conv3_b"], CONV3)
    assert a.shape == (15, 15, 128)
    h = fc_forward(a.reshape(-1), params["fc_w"], params["fc_b"])
    assert h.shape == (128,)


def test_identity_kernel():
    spec = ConvSpec(1, 1, 1)
    x = np.array([[[3.5]]])
    y = conv2d_forward(x, np.ones((1, 1, 1, 1)), np.zeros(1), spec)
    np.testing.assert_array_equal(y, x)
    dy = np.array([[[-2.0]]])
    dx, _, _ = conv2d_backward(x, np.ones((1, 1, 1, 1)), spec, dy)
    np.testing.assert_array_equal(dx, dy)


@settings(max_examples=40, deadline=None)
@given(spec=conv_specs, h=st.integers(3, 6), w=st.integers(3, 6), c=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_conv_matches_direct_loop(spec, h, w, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(h, w, c))
    wt = rng.normal(size=spec.weight_shape(c))
    b = rng.normal(size=spec.filters)
    np.testing.assert_allclose(conv2d_forward(x, wt, b, spec), naive_conv(x, wt, b, spec), rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(spec=conv_specs, h=st.integers(3, 5), w=st.integers(3, 5), c=st.integers(1, 2), seed=st.integers(0, 2**16))
def test_conv_gradients_finite_difference(spec, h, w, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, h, w, c))
    oh, ow = spec.output_hw(h, w)
    probe = rng.normal(size=(2, oh, ow, spec.filters))
    params = {"x": x, "w": rng.normal(size=spec.weight_shape(c)), "b": rng.normal(size=spec.filters)}

    def loss_and_grad(p):
        y = conv2d_forward(p["x"], p["w"], p["b"], spec)
        dx, dw, db = conv2d_backward(p["x"], p["w"], spec, probe)
        return float(np.sum(y * probe)), {"x": dx, "w": dw, "b": db}

    assert finite_difference_check(loss_and_grad, params) < 1e-4


def test_conv_random_5x5x2_three_filters():
    rng = np.random.default_rng(7)
    spec = ConvSpec(3, 2, 2, 1, 1, 0, 1, 0, 1)
    params = {"x": rng.normal(size=(5, 5, 2)), "w": rng.normal(size=spec.weight_shape(2)), "b": rng.normal(size=3)}
    probe = rng.normal(size=(5, 5, 3))

    def loss_and_grad(p):
        y = conv2d_forward(p["x"], p["w"], p["b"], spec)
        dx, dw, db = conv2d_backward(p["x"], p["w"], spec, probe)
        return float(np.sum(y * probe)), {"x": dx, "w": dw, "b": db}

    assert finite_difference_check(loss_and_grad, params) < 1e-4


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 6, 2))
    w = rng.normal(size=CONV2.weight_shape(2)[:3] + (4,))
    spec = ConvSpec(4, 2, 2, 2, 2)
    dx, dw, db = conv2d_backward(x, w, spec, np.zeros((3, 3, 4)))
    assert not dx.any() and not dw.any() and not db.any()
    dx, dw, db = fc_backward(rng.normal(size=5), rng.normal(size=(3, 5)), np.zeros(3))
    assert not dx.any() and not dw.any() and not db.any()


def test_conv_shape_errors():
    spec = ConvSpec(2, 2, 2)
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((4, 4, 3)), np.zeros((2, 2, 2, 2)), np.zeros(2), spec)
    with pytest.raises(ShapeError):
        conv2d_forward(np.zeros((4, 4, 2)), np.zeros((2, 2, 2, 2)), np.zeros(3), spec)
    with pytest.raises(ShapeError):
        conv2d_backward(np.zeros((4, 4, 2)), np.zeros((2, 2, 2, 2)), spec, np.zeros((2, 2, 2)))
    with pytest.raises(ShapeError):
        ConvSpec(1, 5, 5).output_hw(3, 3)


def test_fc_examples():
    x = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(fc_forward(x, np.eye(3), np.zeros(3)), x)
    b = np.array([0.5, 1.5])
    np.testing.assert_array_equal(fc_forward(np.zeros(3), np.ones((2, 3)), b), b)
    _, dw, _ = fc_backward(np.array([4.0]), np.array([[0.3]]), np.array([-1.5]))
    assert dw[0, 0] == -1.5 * 4.0
    with pytest.raises(ShapeError):
        fc_forward(np.zeros(4), np.zeros((2, 3)), np.zeros(2))


def test_fc_random_10_to_4_finite_difference():
    rng = np.random.default_rng(3)
    probe = rng.normal(size=(3, 4))
    params = {"x": rng.normal(size=(3, 10)), "w": rng.normal(size=(4, 10)), "b": rng.normal(size=4)}

    def loss_and_grad(p):
        y = fc_forward(p["x"], p["w"], p["b"])
        dx, dw, db = fc_backward(p["x"], p["w"], probe)
        return float(np.sum(y * probe)), {"x": dx, "w": dw, "b": db}

    assert finite_difference_check(loss_and_grad, params) < 1e-4


def test_leaky_relu_examples():
    assert leaky_relu(np.array(2.0)) == 2.0
    assert leaky_relu(np.array(-1.0), 0.01) == pytest.approx(-0.01)
    assert leaky_relu(np.array(0.0)) == 0.0
    np.testing.assert_allclose(leaky_relu_backward(np.array([3.0, -3.0]), np.array([2.0, 2.0]), 0.1), [2.0, 0.2])


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(-5, 5), seed=st.integers(0, 2**16))
def test_linearity_without_bias(scale, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(5, 5, 2))
    w = rng.normal(size=CONV1.weight_shape(2)[:3] + (3,))
    spec = ConvSpec(3, 4, 4, 2, 2, 1, 1, 1, 1)
    y1 = conv2d_forward(scale * x, w, np.zeros(3), spec)
    y2 = scale * conv2d_forward(x, w, np.zeros(3), spec)
    np.testing.assert_allclose(y1, y2, atol=1e-10)
    fw = rng.normal(size=(4, 6))
    v = rng.normal(size=6)
    np.testing.assert_allclose(fc_forward(scale * v, fw, np.zeros(4)), scale * fc_forward(v, fw, np.zeros(4)),
                               atol=1e-10)


def test_init_deterministic_and_seed_dependent():
    a, b, c = init_params(5), init_params(5), init_params(6)
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])
    assert any(not np.array_equal(a[k], c[k]) for k in a if k.endswith("_w"))
    assert all(not a[k].any() for k in a if k.endswith("_b"))


def test_param_shapes_split():
    shapes = param_shapes()
    assert shapes["fc_w"] == (128, 15 * 15 * 128)
    assert shapes["value_w"] == (1, 64) and shapes["adv_w"] == (9, 64)
    assert "value_w" not in param_shapes(dueling=False)
