"""MSE loss over taken actions, Adam updates, and a finite-difference checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class DivergenceError(FloatingPointError):
    """A loss or gradient went non-finite during training."""


@dataclass
class LossReport:
    loss: float
    deltas: np.ndarray
    dpred: np.ndarray  # dJ/dpred, seeds the backward pass


def mse_loss(pred, target) -> LossReport:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"pred {pred.shape} and target {target.shape} must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("empty minibatch")
    diff = pred - target
    b = pred.size
    return LossReport(loss=float(np.mean(diff * diff)), deltas=np.abs(diff), dpred=2.0 * diff / b)


@dataclass
class AdamState:
    """Moments ``s`` (first) and ``r`` (second), mirrored per parameter."""

    lr: float = 1e-4
    rho_s: float = 0.9
    rho_r: float = 0.999
    delta: float = 1e-8
    t: int = 0
    s: dict[str, np.ndarray] = field(default_factory=dict)
    r: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **kw) -> "AdamState":
        state = cls(**kw)
        state.s = {k: np.zeros_like(v) for k, v in params.items()}
        state.r = {k: np.zeros_like(v) for k, v in params.items()}
        return state


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """Update ``params`` and ``state`` in place.

    The second moment accumulates g*g and the stability constant sits inside
    the square root: theta -= lr * s_hat / sqrt(r_hat + delta).
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name} at Adam step {state.t + 1}")
    state.t += 1
    bias_s = 1.0 - state.rho_s ** state.t
    bias_r = 1.0 - state.rho_r ** state.t
    for name, g in grads.items():
        s = state.s[name]
        r = state.r[name]
        s *= state.rho_s
        s += (1.0 - state.rho_s) * g
        r *= state.rho_r
        r += (1.0 - state.rho_r) * (g * g)
        s_hat = s / bias_s
        r_hat = r / bias_r
        params[name] -= (state.lr * s_hat / np.sqrt(r_hat + state.delta)).astype(params[name].dtype)


def finite_difference_check(
    loss_and_grad: Callable[[dict[str, np.ndarray]], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    eps: float = 1e-4,
    floor: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_and_grad(params)`` must return the scalar loss and a gradient dict.
    Every parameter element is perturbed, so keep the network small. The
    relative error of one element is ``|a - n| / max(|a|, |n|, floor)``.
    """
    params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    _, analytic = loss_and_grad(params)
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        ga = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            j_plus, _ = loss_and_grad(params)
            flat[i] = orig - eps
            j_minus, _ = loss_and_grad(params)
            flat[i] = orig
            numeric = (j_plus - j_minus) / (2.0 * eps)
            err = abs(ga[i] - numeric) / max(abs(ga[i]), abs(numeric), floor)
            worst = max(worst, err)
    return worst
