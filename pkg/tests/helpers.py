import numpy as np

from tl3dqn import network
from tl3dqn.tensor_nn import ConvSpec, init_params

# same wiring as the real network, shrunk to an 8x8x2 input
TINY_LAYERS = (
    ("conv1", ConvSpec(2, 4, 4, 2, 2, 1, 1, 1, 1)),
    ("conv2", ConvSpec(3, 2, 2, 2, 2)),
    ("conv3", ConvSpec(4, 2, 2, 1, 1, 0, 1, 0, 1)),
)
TINY_INPUT = (8, 8, 2)


def tiny_params(seed=0, dueling=True):
    return init_params(seed, dueling=dueling, dtype=np.float64, layers=TINY_LAYERS, input_shape=TINY_INPUT,
                       hidden=8)


def tiny_loss_and_grad(x, actions, targets, beta=0.01):
    rows = np.arange(len(actions))

    def loss_and_grad(params):
        q, cache = network.forward(params, x, beta, layers=TINY_LAYERS)
        diff = q[rows, actions] - targets
        dq = np.zeros_like(q)
        dq[rows, actions] = 2.0 * diff / len(diff)
        return float(np.mean(diff ** 2)), network.backward(params, cache, dq, beta)

    return loss_and_grad


def smooth_tiny_case(rng, dueling=True, batch=4, margin=2e-3):
    """Random params/batch whose pre-activations all sit ``margin`` away from
    the leaky-ReLU kink, so central differences never straddle it."""
    while True:
        params = tiny_params(int(rng.integers(2**31)), dueling)
        for k in params:
            if k.endswith("_b"):
                params[k] = rng.normal(scale=0.1, size=params[k].shape)
        x = rng.normal(size=(batch,) + TINY_INPUT)
        _, cache = network.forward(params, x, layers=TINY_LAYERS)
        pre = [cache[name][1] for name, _ in TINY_LAYERS] + [cache["fc"][1]]
        if min(np.abs(z).min() for z in pre) > margin:
            return params, x


def naive_conv(x, w, b, spec):
    """Direct loop over output cells of one (H, W, C) sample."""
    xp = np.pad(x, ((spec.pad_top, spec.pad_bottom), (spec.pad_left, spec.pad_right), (0, 0)))
    oh, ow = spec.output_hw(x.shape[0], x.shape[1])
    out = np.zeros((oh, ow, spec.filters))
    for i in range(oh):
        for j in range(ow):
            patch = xp[i * spec.stride_h:i * spec.stride_h + spec.filter_h,
                       j * spec.stride_w:j * spec.stride_w + spec.filter_w, :]
            for f in range(spec.filters):
                out[i, j, f] = b[f] + np.sum(patch * w[:, :, :, f])
    return out


def hand_forward(params, x, layers, beta=0.01):
    """Loop-by-loop Q for one sample, sharing no code with the network module."""
    def act(v):
        return np.array([t if t > 0 else beta * t for t in np.ravel(v)]).reshape(np.shape(v))

    a = x
    for name, spec in layers:
        a = act(naive_conv(a, params[f"{name}_w"], params[f"{name}_b"], spec))
    flat = a.reshape(-1)
    h = act([sum(params["fc_w"][k, m] * flat[m] for m in range(flat.size)) + params["fc_b"][k]
             for k in range(params["fc_w"].shape[0])])
    if "value_w" not in params:
        return np.array([params["q_b"][k] + sum(params["q_w"][k] * h) for k in range(9)])
    half = len(h) // 2
    v = params["value_b"][0] + sum(params["value_w"][0] * h[:half])
    adv = [params["adv_b"][k] + sum(params["adv_w"][k] * h[half:]) for k in range(9)]
    mean = sum(adv) / 9
    return np.array([v + adv[k] - mean for k in range(9)])
