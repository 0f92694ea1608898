"""Forward and backward passes of the fixed Q-network topology.

conv1 -> conv2 -> conv3 -> fc(128) -> split 64/64 -> value(1), advantage(9),
recombined by :func:`dueling_combine`. With ``dueling=False`` the split is
replaced by one 128 -> 9 map.
"""

from __future__ import annotations

import numpy as np

from .tensor_nn import (
    CONV_LAYERS,
    conv2d_backward,
    conv2d_forward,
    fc_backward,
    fc_forward,
    leaky_relu,
    leaky_relu_backward,
)


def is_dueling(params: dict[str, np.ndarray]) -> bool:
    return "value_w" in params


def dueling_combine(value: np.ndarray, advantage: np.ndarray) -> np.ndarray:
    """Q(a) = V + A(a) - mean(A). Works on a single sample or a batch."""
    value = np.asarray(value)
    advantage = np.asarray(advantage)
    centered = advantage - advantage.mean(axis=-1, keepdims=True)
    if value.ndim == advantage.ndim:
        return value + centered
    return value[..., None] + centered


def forward(params: dict[str, np.ndarray], x: np.ndarray, beta: float = 0.01, layers=CONV_LAYERS):
    """Return ``(q, cache)`` for a batch ``x`` of shape ``(N, H, W, C)``.

    ``layers`` swaps in a different conv stack (same wiring), which keeps
    whole-network gradient checks small.
    """
    cache = {"x": x, "layers": layers}
    a = x
    for name, spec in layers:
        z = conv2d_forward(a, params[f"{name}_w"], params[f"{name}_b"], spec)
        cache[name] = (a, z)
        a = leaky_relu(z, beta)
    flat = a.reshape(a.shape[0], -1)
    cache["conv_out_shape"] = a.shape
    z = fc_forward(flat, params["fc_w"], params["fc_b"])
    cache["fc"] = (flat, z)
    h = leaky_relu(z, beta)
    if is_dueling(params):
        half = h.shape[1] // 2
        hv, ha = h[:, :half], h[:, half:]
        v = fc_forward(hv, params["value_w"], params["value_b"])
        adv = fc_forward(ha, params["adv_w"], params["adv_b"])
        cache["heads"] = (hv, ha)
        cache["value"] = v[:, 0]
        q = dueling_combine(v, adv)
    else:
        cache["heads"] = (h,)
        q = fc_forward(h, params["q_w"], params["q_b"])
    return q, cache


def backward(params: dict[str, np.ndarray], cache: dict, dq: np.ndarray, beta: float = 0.01):
    """Gradients of every parameter given ``dq = dJ/dQ`` of shape ``(N, 9)``."""
    grads: dict[str, np.ndarray] = {}
    if is_dueling(params):
        hv, ha = cache["heads"]
        dv = dq.sum(axis=1, keepdims=True)
        dadv = dq - dq.mean(axis=1, keepdims=True)
        dhv, grads["value_w"], grads["value_b"] = fc_backward(hv, params["value_w"], dv)
        dha, grads["adv_w"], grads["adv_b"] = fc_backward(ha, params["adv_w"], dadv)
        dh = np.concatenate([dhv, dha], axis=1)
    else:
        (h,) = cache["heads"]
        dh, grads["q_w"], grads["q_b"] = fc_backward(h, params["q_w"], dq)

    flat, z = cache["fc"]
    dz = leaky_relu_backward(z, dh, beta)
    dflat, grads["fc_w"], grads["fc_b"] = fc_backward(flat, params["fc_w"], dz)
    da = dflat.reshape(cache["conv_out_shape"])
    for name, spec in reversed(cache["layers"]):
        a_in, z = cache[name]
        dz = leaky_relu_backward(z, da, beta)
        da, grads[f"{name}_w"], grads[f"{name}_b"] = conv2d_backward(a_in, params[f"{name}_w"], spec, dz)
    return {name: grads[name] for name in params}
