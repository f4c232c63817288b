"""Minimal numpy CNN for action-value estimation.

Stacked valid convolutions with rectifiers, one hidden dense layer, and a
linear head; hand-written backward passes verified against central finite
differences.  Float64 throughout; checkpoints store weights as little-endian
float32.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_MAGIC = b"UEQN"
CHECKPOINT_VERSION = 1


def relu(x):
    return np.maximum(x, 0.0)


def relu_grad(x):
    return (x > 0.0).astype(x.dtype)


class Conv2D:
    """Valid (no-padding) strided convolution over NCHW inputs."""

    def __init__(self, in_channels, out_channels, kernel, stride, rng):
        fan_in = in_channels * kernel * kernel
        self.weights = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                  size=(out_channels, in_channels,
                                        kernel, kernel))
        self.bias = np.zeros(out_channels)
        self.stride = stride
        self.kernel = kernel

    def spec(self):
        o, c, kh, kw = self.weights.shape
        return ("conv", c, o, kh, self.stride)

    def out_size(self, n):
        if n < self.kernel:
            raise ValueError(f"input size {n} below kernel {self.kernel}")
        if (n - self.kernel) % self.stride != 0:
            raise ValueError(
                f"input size {n} incompatible with kernel {self.kernel} "
                f"stride {self.stride} under valid padding")
        return (n - self.kernel) // self.stride + 1

    def _windows(self, x):
        view = np.lib.stride_tricks.sliding_window_view(
            x, (self.kernel, self.kernel), axis=(2, 3))
        return view[:, :, ::self.stride, ::self.stride]

    def forward(self, x):
        cols = self._windows(x)  # (N, C, oh, ow, kh, kw)
        out = np.tensordot(cols, self.weights, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2) + self.bias[None, :, None, None]
        return out, (x, cols)

    def backward(self, dout, cache):
        x, cols = cache
        d_w = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
        d_b = dout.sum(axis=(0, 2, 3))
        dx = np.zeros_like(x)
        _, _, oh, ow = dout.shape
        s, k = self.stride, self.kernel
        for p in range(k):
            for q in range(k):
                patch = np.tensordot(dout, self.weights[:, :, p, q],
                                     axes=([1], [0]))  # (N, oh, ow, C)
                dx[:, :, p:p + oh * s:s, q:q + ow * s:s] += \
                    patch.transpose(0, 3, 1, 2)
        return dx, [d_w, d_b]

    @property
    def params(self):
        return [self.weights, self.bias]


class Dense:
    """Fully-connected layer over flattened inputs."""

    def __init__(self, in_features, out_features, rng):
        self.weights = rng.normal(0.0, np.sqrt(2.0 / in_features),
                                  size=(in_features, out_features))
        self.bias = np.zeros(out_features)

    def spec(self):
        return ("dense",) + self.weights.shape

    def forward(self, x):
        return x @ self.weights + self.bias, x

    def backward(self, dout, cache):
        x = cache
        return dout @ self.weights.T, [x.T @ dout, dout.sum(axis=0)]

    @property
    def params(self):
        return [self.weights, self.bias]


CONV_STAGES = ((32, 8, 4), (64, 4, 2), (64, 3, 1))
HIDDEN_UNITS = 512


class QNetwork:
    """Action-value CNN: three conv+rectifier stages, one hidden dense layer.

    ``input_size`` is the square observation resolution; it must chain
    through the valid convolutions (84 does, as do 36, 44, 52, ...).
    """

    def __init__(self, input_size: int, n_actions: int,
                 rng: np.random.Generator,
                 conv_stages=CONV_STAGES, hidden_units=HIDDEN_UNITS):
        self.input_size = input_size
        self.n_actions = n_actions
        self.conv_layers = []
        channels, size = 1, input_size
        for out_ch, kernel, stride in conv_stages:
            layer = Conv2D(channels, out_ch, kernel, stride, rng)
            size = layer.out_size(size)
            self.conv_layers.append(layer)
            channels = out_ch
        self.flat_features = channels * size * size
        self.hidden = Dense(self.flat_features, hidden_units, rng)
        self.head = Dense(hidden_units, n_actions, rng)
        # near-zero head: initial action-value spread starts below the reward
        # scale instead of swamping it
        self.head.weights *= 0.02
        self._cache = None

    @property
    def layers(self):
        return [*self.conv_layers, self.hidden, self.head]

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def architecture_hash(self) -> str:
        desc = json.dumps([self.input_size, self.n_actions]
                          + [list(l.spec()) for l in self.layers])
        return hashlib.sha256(desc.encode()).hexdigest()[:16]

    def forward(self, x, keep_cache=False):
        """Q-values for a batch of observations shaped (N, size, size)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.shape[-2:] != (self.input_size, self.input_size):
            raise ValueError(f"input shape {x.shape} does not match "
                             f"network size {self.input_size}")
        act = x[:, None, :, :]
        caches = []
        preacts = []
        for layer in self.conv_layers:
            z, cache = layer.forward(act)
            caches.append(cache)
            preacts.append(z)
            act = relu(z)
        flat = act.reshape(act.shape[0], -1)
        z_h, cache_h = self.hidden.forward(flat)
        caches.append(cache_h)
        preacts.append(z_h)
        hid = relu(z_h)
        out, cache_o = self.head.forward(hid)
        caches.append(cache_o)
        if keep_cache:
            self._cache = (caches, preacts, act.shape)
        return out

    def backward(self, dout):
        """Gradients of all parameters for upstream gradient dout (N, actions).

        Requires a preceding forward with keep_cache=True.  Gradient flows
        only through output units with nonzero dout.
        """
        if self._cache is None:
            raise RuntimeError("backward requires forward(keep_cache=True)")
        caches, preacts, conv_shape = self._cache
        grads = {}
        d_hid, head_grads = self.head.backward(dout, caches[-1])
        grads[len(self.layers) - 1] = head_grads
        d_z = d_hid * relu_grad(preacts[-1])
        d_flat, hidden_grads = self.hidden.backward(d_z, caches[-2])
        grads[len(self.layers) - 2] = hidden_grads
        d_act = d_flat.reshape(conv_shape)
        for i in range(len(self.conv_layers) - 1, -1, -1):
            d_z = d_act * relu_grad(preacts[i])
            d_act, layer_grads = self.conv_layers[i].backward(d_z, caches[i])
            grads[i] = layer_grads
        return [g for i in range(len(self.layers)) for g in grads[i]]

    def preactivations(self, x):
        """Per-layer pre-rectifier values, for kink-avoidance checks."""
        self.forward(x, keep_cache=True)
        _, preacts, _ = self._cache
        return preacts

    def copy_weights_from(self, other: "QNetwork"):
        for mine, theirs in zip(self.params, other.params):
            mine[...] = theirs

    def clone(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.__dict__.update({k: v for k, v in self.__dict__.items()
                              if k not in ("conv_layers", "hidden", "head",
                                           "_cache")})
        twin.conv_layers = []
        for layer in self.conv_layers:
            c = Conv2D.__new__(Conv2D)
            c.weights = layer.weights.copy()
            c.bias = layer.bias.copy()
            c.stride, c.kernel = layer.stride, layer.kernel
            twin.conv_layers.append(c)
        for name in ("hidden", "head"):
            src = getattr(self, name)
            d = Dense.__new__(Dense)
            d.weights = src.weights.copy()
            d.bias = src.bias.copy()
            setattr(twin, name, d)
        twin._cache = None
        return twin


@dataclass
class AdamState:
    """First/second moment accumulators with bias-corrected updates."""

    learning_rate: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def optimizer_step(params, grads, state: AdamState):
    """One adaptive-moment update of params in place."""
    if len(params) != len(grads):
        raise ValueError("parameter/gradient count mismatch")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.t
    bias2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != param {p.shape}")
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * g * g
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2)
                                                  + state.eps)


def grad_check(net: QNetwork, x, action_index: int,
               coords_per_param: int = 10, step: float = 1e-4,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between backprop and central finite differences.

    Samples a few coordinates per parameter array and perturbs them on the
    scalar objective Q(x)[action_index].
    """
    rng = rng or np.random.default_rng(0)
    x = np.asarray(x, dtype=float)
    out = net.forward(x, keep_cache=True)
    dout = np.zeros_like(out)
    dout[:, action_index] = 1.0
    analytic = net.backward(dout)

    worst = 0.0
    for p, g in zip(net.params, analytic):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        n = flat_p.size
        picks = rng.choice(n, size=min(coords_per_param, n), replace=False)
        for i in picks:
            keep = flat_p[i]
            flat_p[i] = keep + step
            up = net.forward(x)[:, action_index].sum()
            flat_p[i] = keep - step
            down = net.forward(x)[:, action_index].sum()
            flat_p[i] = keep
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(flat_g[i]), abs(numeric), 1e-12)
            worst = max(worst, abs(flat_g[i] - numeric) / denom)
    return worst


def save_checkpoint(path, net: QNetwork, slot_count: int, epsilon: float,
                    action_counts):
    """Write header (architecture hash, progress, stats) then float32 weights."""
    header = json.dumps({
        "arch": net.architecture_hash(),
        "input_size": net.input_size,
        "n_actions": net.n_actions,
        "slot_count": int(slot_count),
        "epsilon": float(epsilon),
        "action_counts": [int(c) for c in action_counts],
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for p in net.params:
            fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path, net: QNetwork):
    """Load weights into net (must match the stored architecture); return header."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a network checkpoint: bad magic {magic!r}")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode())
        if header["arch"] != net.architecture_hash():
            raise ValueError("checkpoint architecture does not match network")
        for p in net.params:
            raw = fh.read(p.size * 4)
            if len(raw) != p.size * 4:
                raise ValueError("checkpoint payload truncated")
            p[...] = np.frombuffer(raw, dtype="<f4").reshape(p.shape)
    return header
