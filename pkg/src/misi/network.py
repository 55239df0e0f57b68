"""Implicit neural representation of the material maps.

A fixed Fourier-feature embedding feeds a weight-normalized SiLU MLP with a
two-unit sigmoid-bounded head emitting the permittivity offset and the
conductivity. Forward, exact reverse-mode backward, and an Adam step with
global-norm clipping are implemented directly on numpy arrays.
"""

import struct
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class NetConfig:
    n_features: int = 128       # Fourier feature count m
    hidden_width: int = 256
    hidden_depth: int = 3
    sigma_ff: float = 3.0       # feature matrix std
    eps_max: float = 80.0       # upper bound for relative permittivity
    sigma_max: float = 1.0      # upper bound for conductivity [S/m]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def __post_init__(self):
        if self.n_features < 1 or self.hidden_width < 1 or self.hidden_depth < 1:
            raise ValueError("network sizes must be >= 1")
        if self.eps_max <= 1.0:
            raise ValueError("eps_max must exceed 1")


@dataclass
class Layer:
    v: np.ndarray      # direction matrix (out, in)
    g: np.ndarray      # magnitude per output row
    b: np.ndarray      # bias per output row

    def effective_weight(self):
        norms = np.linalg.norm(self.v, axis=1, keepdims=True)
        return self.g[:, None] * self.v / norms


@dataclass
class NetworkState:
    cfg: NetConfig
    feature_matrix: np.ndarray       # (m, 2), fixed, never updated
    layers: list                     # hidden layers then the 2-unit output layer
    adam_m: list = field(default_factory=list)
    adam_v: list = field(default_factory=list)
    step: int = 0

    def parameter_arrays(self):
        """Trainable arrays in declaration order (v, g, b per layer)."""
        out = []
        for layer in self.layers:
            out.extend([layer.v, layer.g, layer.b])
        return out


@dataclass(frozen=True)
class MaterialMaps:
    delta_eps: np.ndarray   # eps_r - 1, per pixel
    sigma: np.ndarray       # conductivity [S/m], per pixel


def _silu(x):
    return x * _sigmoid(x)


def _sigmoid(x):
    return expit(x)


def _silu_grad(x):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def init_network(seed, cfg=NetConfig()):
    """Seeded initialization: weight-norm identity start, -3.0 output biases."""
    rng = np.random.default_rng(seed)
    b_mat = rng.normal(0.0, cfg.sigma_ff, size=(cfg.n_features, 2))
    widths = [2 * cfg.n_features] + [cfg.hidden_width] * cfg.hidden_depth + [2]
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        v = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in))
        g = np.linalg.norm(v, axis=1)
        is_output = i == len(widths) - 2
        b = np.full(fan_out, -3.0) if is_output else np.zeros(fan_out)
        layers.append(Layer(v=v, g=g, b=b))
    net = NetworkState(cfg=cfg, feature_matrix=b_mat, layers=layers)
    net.adam_m = [np.zeros_like(a) for a in net.parameter_arrays()]
    net.adam_v = [np.zeros_like(a) for a in net.parameter_arrays()]
    return net


def forward_maps(net, coords):
    """Evaluate the material maps at normalized coordinates in [-1, 1]^2.

    Returns (MaterialMaps, cache); the cache feeds backward_maps and is tied
    to the parameter state it was computed with.
    """
    coords = np.asarray(coords, dtype=float)
    proj = 2.0 * np.pi * coords @ net.feature_matrix.T
    h = np.concatenate([np.sin(proj), np.cos(proj)], axis=1)
    inputs, preacts, weights = [], [], []
    for i, layer in enumerate(net.layers):
        w = layer.effective_weight()
        z = h @ w.T + layer.b
        inputs.append(h)
        preacts.append(z)
        weights.append(w)
        h = _silu(z) if i < len(net.layers) - 1 else z
    s1 = _sigmoid(h[:, 0])
    s2 = _sigmoid(h[:, 1])
    maps = MaterialMaps(delta_eps=(net.cfg.eps_max - 1.0) * s1,
                        sigma=net.cfg.sigma_max * s2)
    cache = {"inputs": inputs, "preacts": preacts, "weights": weights,
             "sig": (s1, s2), "step": net.step}
    return maps, cache


def backward_maps(net, cache, d_delta_eps, d_sigma):
    """Exact reverse-mode gradients for every v, g, b given map-space upstreams.

    Raises if the cache does not match the current parameter state.
    """
    if cache["step"] != net.step:
        raise ValueError("stale forward cache: parameters changed since forward")
    s1, s2 = cache["sig"]
    dz = np.column_stack([
        np.asarray(d_delta_eps) * (net.cfg.eps_max - 1.0) * s1 * (1.0 - s1),
        np.asarray(d_sigma) * net.cfg.sigma_max * s2 * (1.0 - s2),
    ])
    grads = [None] * (3 * len(net.layers))
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        w = cache["weights"][i]
        h_in = cache["inputs"][i]
        dw = dz.T @ h_in
        db = dz.sum(axis=0)
        norms = np.linalg.norm(layer.v, axis=1)
        unit = layer.v / norms[:, None]
        dg = np.sum(dw * unit, axis=1)
        dv = (layer.g / norms)[:, None] * (dw - dg[:, None] * unit)
        grads[3 * i:3 * i + 3] = [dv, dg, db]
        if i > 0:
            dz = (dz @ w) * _silu_grad(cache["preacts"][i - 1])
    return grads


def adam_step(net, grads, max_norm=1.0, lr=None):
    """Global-norm clip then one Adam update, mutating the state in place."""
    if lr is None:
        lr = net.cfg.lr
    total_sq = 0.0
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient passed to adam_step")
        total_sq += float(np.sum(g * g))
    gnorm = np.sqrt(total_sq)
    scale = max_norm / gnorm if gnorm > max_norm else 1.0

    cfg = net.cfg
    net.step += 1
    t = net.step
    bias1 = 1.0 - cfg.beta1 ** t
    bias2 = 1.0 - cfg.beta2 ** t
    for p, g, m, v in zip(net.parameter_arrays(), grads, net.adam_m, net.adam_v):
        g = g * scale
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p -= lr * (m / bias1) / (np.sqrt(v / bias2) + cfg.eps_adam)
    return net


_CKPT_MAGIC = b"MNET1"
_CKPT_HEADER = struct.Struct("<IIIddddddQ")


def save_checkpoint(net, path):
    """Versioned binary checkpoint: magic, hyperparameter header, then all
    parameter and moment arrays as little-endian float64 in declaration order."""
    cfg = net.cfg
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(_CKPT_HEADER.pack(cfg.n_features, cfg.hidden_width,
                                   cfg.hidden_depth, cfg.sigma_ff, cfg.eps_max,
                                   cfg.sigma_max, cfg.lr, cfg.beta1, cfg.beta2,
                                   net.step))
        fh.write(struct.pack("<d", cfg.eps_adam))
        for arr in ([net.feature_matrix] + net.parameter_arrays()
                    + net.adam_m + net.adam_v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(_CKPT_MAGIC))
        if magic != _CKPT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        (m, width, depth, sigma_ff, eps_max, sigma_max, lr, beta1, beta2,
         step) = _CKPT_HEADER.unpack(fh.read(_CKPT_HEADER.size))
        (eps_adam,) = struct.unpack("<d", fh.read(8))
        cfg = NetConfig(n_features=m, hidden_width=width, hidden_depth=depth,
                        sigma_ff=sigma_ff, eps_max=eps_max, sigma_max=sigma_max,
                        lr=lr, beta1=beta1, beta2=beta2, eps_adam=eps_adam)
        net = init_network(0, cfg)
        net.step = step

        def read_into(arr):
            data = fh.read(arr.size * 8)
            arr[...] = np.frombuffer(data, dtype="<f8").reshape(arr.shape)

        read_into(net.feature_matrix)
        for arr in net.parameter_arrays() + net.adam_m + net.adam_v:
            read_into(arr)
    return net
