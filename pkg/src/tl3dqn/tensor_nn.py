"""Dense-tensor layer kernels with hand-written backward passes.

Activations are laid out channels-last: ``(N, H, W, C)`` for a batch, or
``(H, W, C)`` for a single sample. Convolution weights are stored as
``(filter_h, filter_w, in_channels, filters)`` and fully-connected weights as
``(out, in)``. Every kernel keeps the dtype of its inputs, so the same code
runs in float32 for training and float64 for gradient checking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Raised when tensors do not fit the configured layer."""


@dataclass(frozen=True)
class ConvSpec:
    filters: int
    filter_h: int
    filter_w: int
    stride_h: int = 1
    stride_w: int = 1
    pad_top: int = 0
    pad_bottom: int = 0
    pad_left: int = 0
    pad_right: int = 0

    def output_hw(self, h: int, w: int) -> tuple[int, int]:
        span_h = h + self.pad_top + self.pad_bottom - self.filter_h
        span_w = w + self.pad_left + self.pad_right - self.filter_w
        if span_h < 0 or span_w < 0:
            raise ShapeError(f"filter {self.filter_h}x{self.filter_w} larger than padded input {h}x{w}")
        return span_h // self.stride_h + 1, span_w // self.stride_w + 1

    def weight_shape(self, in_channels: int) -> tuple[int, int, int, int]:
        return (self.filter_h, self.filter_w, in_channels, self.filters)


# The three convolutional layers of the Q-network. Padding is the only one
# that reproduces 60 -> 30 -> 15 -> 15 with the given filters and strides.
CONV1 = ConvSpec(32, 4, 4, 2, 2, 1, 1, 1, 1)
CONV2 = ConvSpec(64, 2, 2, 2, 2)
CONV3 = ConvSpec(128, 2, 2, 1, 1, 0, 1, 0, 1)
CONV_LAYERS = (("conv1", CONV1), ("conv2", CONV2), ("conv3", CONV3))

INPUT_SHAPE = (60, 60, 2)
HIDDEN = 128
N_ACTIONS = 9


def _batched(x: np.ndarray, ndim: int) -> tuple[np.ndarray, bool]:
    if x.ndim == ndim - 1:
        return x[None], True
    if x.ndim != ndim:
        raise ShapeError(f"expected {ndim - 1}- or {ndim}-d input, got shape {x.shape}")
    return x, False


def _check_conv(x: np.ndarray, weights: np.ndarray, spec: ConvSpec) -> None:
    expected = spec.weight_shape(x.shape[-1])
    if weights.shape != expected:
        raise ShapeError(f"conv weights {weights.shape} do not match {expected} for input {x.shape}")


def _pad(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    if not (spec.pad_top or spec.pad_bottom or spec.pad_left or spec.pad_right):
        return x
    return np.pad(x, ((0, 0), (spec.pad_top, spec.pad_bottom), (spec.pad_left, spec.pad_right), (0, 0)))


def _im2col(xp: np.ndarray, spec: ConvSpec, out_h: int, out_w: int) -> np.ndarray:
    # columns ordered (i, j, c) to match weights.reshape(-1, filters)
    sh, sw = spec.stride_h, spec.stride_w
    patches = [
        xp[:, i:i + sh * (out_h - 1) + 1:sh, j:j + sw * (out_w - 1) + 1:sw, :]
        for i in range(spec.filter_h)
        for j in range(spec.filter_w)
    ]
    return np.concatenate(patches, axis=-1)


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, spec: ConvSpec) -> np.ndarray:
    xb, single = _batched(x, 4)
    _check_conv(xb, weights, spec)
    if bias.shape != (spec.filters,):
        raise ShapeError(f"conv bias {bias.shape} does not match {spec.filters} filters")
    out_h, out_w = spec.output_hw(xb.shape[1], xb.shape[2])
    cols = _im2col(_pad(xb, spec), spec, out_h, out_w)
    y = cols @ weights.reshape(-1, spec.filters) + bias
    return y[0] if single else y


def conv2d_backward(x: np.ndarray, weights: np.ndarray, spec: ConvSpec, dy: np.ndarray):
    """Return ``(dx, dweights, dbias)`` for upstream gradient ``dy``."""
    xb, single = _batched(x, 4)
    _check_conv(xb, weights, spec)
    n, h, w, c = xb.shape
    out_h, out_w = spec.output_hw(h, w)
    dyb = dy[None] if single else dy
    if dyb.shape != (n, out_h, out_w, spec.filters):
        raise ShapeError(f"upstream gradient {dy.shape} does not match output {(n, out_h, out_w, spec.filters)}")

    xp = _pad(xb, spec)
    cols = _im2col(xp, spec, out_h, out_w)
    k = cols.shape[-1]
    dy2 = dyb.reshape(-1, spec.filters)
    dw = (cols.reshape(-1, k).T @ dy2).reshape(weights.shape)
    db = dy2.sum(axis=0)

    dcols = (dy2 @ weights.reshape(-1, spec.filters).T).reshape(n, out_h, out_w, spec.filter_h, spec.filter_w, c)
    dxp = np.zeros_like(xp)
    sh, sw = spec.stride_h, spec.stride_w
    for i in range(spec.filter_h):
        for j in range(spec.filter_w):
            dxp[:, i:i + sh * (out_h - 1) + 1:sh, j:j + sw * (out_w - 1) + 1:sw, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, spec.pad_top:spec.pad_top + h, spec.pad_left:spec.pad_left + w, :]
    return (dx[0] if single else dx), dw, db


def fc_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1]:
        raise ShapeError(f"fc weights {weights.shape} cannot take input {x.shape}")
    if bias.shape != (weights.shape[0],):
        raise ShapeError(f"fc bias {bias.shape} does not match weights {weights.shape}")
    return x @ weights.T + bias


def fc_backward(x: np.ndarray, weights: np.ndarray, dy: np.ndarray):
    """Return ``(dx, dweights, dbias)``; ``x`` may be one vector or a batch."""
    if x.shape[-1] != weights.shape[1] or dy.shape[-1] != weights.shape[0]:
        raise ShapeError(f"fc backward shapes x={x.shape} w={weights.shape} dy={dy.shape}")
    xb = x.reshape(-1, x.shape[-1])
    dyb = dy.reshape(-1, dy.shape[-1])
    dw = dyb.T @ xb
    db = dyb.sum(axis=0)
    dx = (dyb @ weights).reshape(x.shape)
    return dx, dw, db


def leaky_relu(x: np.ndarray, beta: float = 0.01) -> np.ndarray:
    return np.where(x > 0, x, beta * x)


def leaky_relu_backward(x: np.ndarray, dy: np.ndarray, beta: float = 0.01) -> np.ndarray:
    """Gradient through leaky ReLU, given the pre-activation ``x``."""
    return np.where(x > 0, dy, beta * dy)


def param_shapes(dueling: bool = True, layers=CONV_LAYERS, input_shape=INPUT_SHAPE,
                 hidden: int = HIDDEN) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes of the Q-network, in canonical order."""
    shapes: dict[str, tuple[int, ...]] = {}
    h, w, c = input_shape
    for name, spec in layers:
        shapes[f"{name}_w"] = spec.weight_shape(c)
        shapes[f"{name}_b"] = (spec.filters,)
        h, w = spec.output_hw(h, w)
        c = spec.filters
    shapes["fc_w"] = (hidden, h * w * c)
    shapes["fc_b"] = (hidden,)
    if dueling:
        half = hidden // 2
        shapes["value_w"] = (1, half)
        shapes["value_b"] = (1,)
        shapes["adv_w"] = (N_ACTIONS, half)
        shapes["adv_b"] = (N_ACTIONS,)
    else:
        shapes["q_w"] = (N_ACTIONS, hidden)
        shapes["q_b"] = (N_ACTIONS,)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.startswith("conv"):
        return shape[0] * shape[1] * shape[2]
    return shape[1]


def init_params(seed: int, dueling: bool = True, dtype=np.float32, **shape_kw) -> dict[str, np.ndarray]:
    """Fan-in scaled uniform weights, zero biases. Deterministic in ``seed``.

    ``shape_kw`` is passed to :func:`param_shapes` for non-standard sizes.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(dueling, **shape_kw).items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = np.sqrt(1.0 / _fan_in(name, shape))
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params
