"""Small fully connected nets with hand-written backpropagation.

Layout: affine -> ReLU -> affine -> ReLU -> affine. Weights are stored as
``(fan_in, fan_out)`` so a batch ``x`` of shape ``(B, fan_in)`` maps to
``x @ W + b``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class MlpParams:
    sizes: tuple
    weights: list
    biases: list

    def copy(self) -> "MlpParams":
        return MlpParams(self.sizes, [w.copy() for w in self.weights],
                         [b.copy() for b in self.biases])

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(self.sizes, [w.astype(dtype) for w in self.weights],
                         [b.astype(dtype) for b in self.biases])

    def tensors(self) -> list:
        """Parameters in storage order: W1, b1, W2, b2, W3, b3."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def equal(self, other: "MlpParams") -> bool:
        return self.sizes == other.sizes and all(
            a.dtype == b.dtype and np.array_equal(a, b)
            for a, b in zip(self.tensors(), other.tensors()))


def init_mlp(sizes, rng: np.random.Generator, dtype=np.float32) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
    sizes = tuple(int(s) for s in sizes)
    ws, bs = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
        bs.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
    return MlpParams(sizes, ws, bs)


def zeros_like(params: MlpParams) -> MlpParams:
    return MlpParams(params.sizes, [np.zeros_like(w) for w in params.weights],
                     [np.zeros_like(b) for b in params.biases])


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Return ``(output, cache)``; ``x`` is ``(B, in)`` or a single ``(in,)`` vector."""
    x = np.asarray(x)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.sizes[0]:
        raise ValueError(f"input has {x.shape[1]} features, net expects {params.sizes[0]}")
    x = x.astype(params.weights[0].dtype, copy=False)
    acts = [x]
    pre = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0) if i < last else z
        acts.append(h)
    out = h[0] if single else h
    return out, (acts, pre, single)


def mlp_backward(params: MlpParams, cache, dout: np.ndarray) -> MlpParams:
    """Gradient of a scalar loss w.r.t. every parameter, given ``dL/doutput``."""
    acts, pre, single = cache
    g = np.asarray(dout, dtype=params.weights[0].dtype)
    if single:
        g = g[None, :]
    dws = [None] * len(params.weights)
    dbs = [None] * len(params.weights)
    for i in range(len(params.weights) - 1, -1, -1):
        if i < len(params.weights) - 1:
            g = g * (pre[i] > 0)
        dws[i] = acts[i].T @ g
        dbs[i] = g.sum(axis=0)
        if i > 0:
            g = g @ params.weights[i].T
    return MlpParams(params.sizes, dws, dbs)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sgd_step(params: MlpParams, grads: MlpParams, lr: float) -> None:
    for p, g in zip(params.tensors(), grads.tensors()):
        p -= np.asarray(lr, dtype=p.dtype) * g


def polyak_update(target: MlpParams, source: MlpParams, rate: float) -> None:
    """target <- (1 - rate) * target + rate * source, in place."""
    for t, s in zip(target.tensors(), source.tensors()):
        t *= np.asarray(1.0 - rate, dtype=t.dtype)
        t += np.asarray(rate, dtype=t.dtype) * s


@dataclass
class AdamState:
    """First and second moment estimates plus the step count."""

    m: MlpParams
    v: MlpParams
    t: int = 0

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t)


def adam_init(params: MlpParams) -> AdamState:
    return AdamState(zeros_like(params), zeros_like(params), 0)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState, lr: float,
              b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8) -> None:
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params.tensors(), grads.tensors(), state.m.tensors(), state.v.tensors()):
        dt = p.dtype
        m *= np.asarray(b1, dtype=dt)
        m += np.asarray(1.0 - b1, dtype=dt) * g
        v *= np.asarray(b2, dtype=dt)
        v += np.asarray(1.0 - b2, dtype=dt) * (g * g)
        step = (m / np.asarray(c1, dtype=dt)) / (np.sqrt(v / np.asarray(c2, dtype=dt))
                                                  + np.asarray(eps, dtype=dt))
        p -= np.asarray(lr, dtype=dt) * step
