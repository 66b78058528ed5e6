from __future__ import annotations

import numpy as np

from ..autodiff import (
    Tensor,
    concat,
    dropout,
    embedding,
    layer_norm,
    matmul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    tmax,
    transpose,
)

NEG_INF = -1e9


class ParameterStore:
    """Ordered name -> Tensor registry shared by every layer of a model."""

    def __init__(self, rng):
        self.rng = rng
        self.tensors = {}

    def add(self, name: str, value) -> Tensor:
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)
        self.tensors[name] = t
        return t

    def normal(self, name: str, shape, std: float) -> Tensor:
        return self.add(name, self.rng.normal(0.0, std, size=shape))

    def zeros(self, name: str, shape) -> Tensor:
        return self.add(name, np.zeros(shape))

    def ones(self, name: str, shape) -> Tensor:
        return self.add(name, np.ones(shape))


class Linear:
    def __init__(self, store, name, fan_in, fan_out, bias_init: float = 0.0):
        self.weight = store.normal(f"{name}.weight", (fan_in, fan_out), 1.0 / np.sqrt(fan_in))
        self.bias = store.add(f"{name}.bias", np.full(fan_out, bias_init))

    def __call__(self, x):
        return matmul(x, self.weight) + self.bias


class MLP:
    """Two linear layers with a relu in between."""

    def __init__(self, store, name, fan_in, hidden, fan_out):
        self.first = Linear(store, f"{name}.0", fan_in, hidden)
        self.second = Linear(store, f"{name}.1", hidden, fan_out)

    def __call__(self, x):
        return self.second(relu(self.first(x)))


class LayerNorm:
    def __init__(self, store, name, d):
        self.gamma = store.ones(f"{name}.gamma", d)
        self.beta = store.zeros(f"{name}.beta", d)

    def __call__(self, x):
        return layer_norm(x, self.gamma, self.beta)


def _windows(width: int) -> np.ndarray:
    return np.arange(9 - width)[:, None] + np.arange(width)[None, :]


class ValueEncoder:
    """Eight-byte value to a d-vector.

    One convolution per width w = 1..8 slides over the bytes, each output
    channel is max-pooled over positions and passed through relu; the
    concatenation is projected to d and refined by a highway layer
    ``t * relu(W_H x) + (1 - t) * x`` with ``t = sigmoid(W_T x)``.
    """

    def __init__(self, store, name, channels, d):
        self.kernels = []
        for w, out in enumerate(channels, start=1):
            k = store.normal(f"{name}.conv{w}.kernel", (w, out), 1.0 / np.sqrt(w))
            b = store.normal(f"{name}.conv{w}.bias", out, 0.1)  # off the relu kink for zero bytes
            self.kernels.append((_windows(w), k, b))
        self.project = Linear(store, f"{name}.project", sum(channels), d)
        self.transform = Linear(store, f"{name}.highway.transform", d, d)
        self.gate = Linear(store, f"{name}.highway.gate", d, d, bias_init=-1.0)

    def convolve(self, values: Tensor) -> Tensor:
        pieces = []
        for idx, k, b in self.kernels:
            win = values[..., idx]  # (..., positions, w)
            pieces.append(relu(tmax(matmul(win, k) + b, axis=-2)))
        return concat(pieces, axis=-1)

    def highway(self, x: Tensor) -> Tensor:
        t = sigmoid(self.gate(x))
        return t * relu(self.transform(x)) + (1.0 - t) * x

    def __call__(self, values) -> Tensor:
        values = values if isinstance(values, Tensor) else Tensor(values)
        if values.shape[-1] != 8:
            raise ValueError(f"value encoder expects 8 bytes, got {values.shape[-1]}")
        return self.highway(self.project(self.convolve(values)))


class AttentionBlock:
    """Pre-norm encoder block: self-attention then a 4d feed-forward, both residual."""

    def __init__(self, store, name, d, heads, dropout_rate=0.0):
        self.heads = heads
        self.d = d
        self.dropout_rate = dropout_rate
        self.norm1 = LayerNorm(store, f"{name}.norm1", d)
        self.qkv = Linear(store, f"{name}.attn.qkv", d, 3 * d)
        self.out = Linear(store, f"{name}.attn.out", d, d)
        self.norm2 = LayerNorm(store, f"{name}.norm2", d)
        self.ffn = MLP(store, f"{name}.ffn", d, 4 * d, d)

    def __call__(self, x: Tensor, pad_bias: np.ndarray, rng=None, training=False) -> Tensor:
        b, n, d = x.shape
        h, dh = self.heads, d // self.heads
        qkv = self.qkv(self.norm1(x))
        qkv = transpose(reshape(qkv, (b, n, 3, h, dh)), (2, 0, 3, 1, 4))  # 3, b, h, n, dh
        q, k, v = qkv[0], qkv[1], qkv[2]
        # scaling q and fusing the bias into softmax keeps one (b, h, n, n) array per step
        scores = matmul(scale(q, 1.0 / np.sqrt(dh)), transpose(k, (0, 1, 3, 2)))
        att = softmax(scores, pad_bias)
        if training and self.dropout_rate:
            att = dropout(att, self.dropout_rate, rng)
        ctx = reshape(transpose(matmul(att, v), (0, 2, 1, 3)), (b, n, d))
        x = x + self._drop(self.out(ctx), rng, training)
        return x + self._drop(self.ffn(self.norm2(x)), rng, training)

    def _drop(self, x, rng, training):
        return dropout(x, self.dropout_rate, rng, training) if self.dropout_rate else x


def padding_bias(pad: np.ndarray) -> np.ndarray:
    """(b, 1, 1, n) additive attention bias that hides padded keys."""
    return np.where(pad, NEG_INF, 0.0)[:, None, None, :]


def lookup(table: Tensor, ids) -> Tensor:
    return embedding(table, ids)
