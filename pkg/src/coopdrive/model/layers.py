"""Transformer building blocks with exact manual backward passes.

Every layer is functional: ``forward(params, ...)`` returns ``(output, cache)``
and ``backward(params, cache, d_out, grads)`` accumulates parameter gradients
into the ``grads`` dict and returns the gradient with respect to the input.
Parameters live in a flat ``dict[str, np.ndarray]`` keyed by dotted names so a
finite-difference check can perturb any single tensor entry.

All matrix products executed inside a :func:`count_macs` context are recorded
(label, multiply-accumulate count) for the complexity accounting.
"""

from __future__ import annotations

import math
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

MASK_FILL = -1e9

# ---------------------------------------------------------------------------
# MAC counting


class MacCounter:
    """Accumulates multiply-accumulate counts per labeled matmul site."""

    def __init__(self) -> None:
        self.by_label: dict[str, int] = {}

    def add(self, label: str, macs: int) -> None:
        self.by_label[label] = self.by_label.get(label, 0) + int(macs)

    def total(self, predicate=None) -> int:
        if predicate is None:
            return sum(self.by_label.values())
        return sum(v for k, v in self.by_label.items() if predicate(k))


_ACTIVE_COUNTER: MacCounter | None = None


@contextmanager
def count_macs():
    """Record every labeled matmul executed inside the block.

    Nested use is not supported; the innermost counter would shadow the outer
    one, so it is rejected outright.
    """
    global _ACTIVE_COUNTER
    if _ACTIVE_COUNTER is not None:
        raise RuntimeError("count_macs() does not nest")
    counter = MacCounter()
    _ACTIVE_COUNTER = counter
    try:
        yield counter
    finally:
        _ACTIVE_COUNTER = None


def _record(label: str, macs: int) -> None:
    if _ACTIVE_COUNTER is not None:
        _ACTIVE_COUNTER.add(label, macs)


# ---------------------------------------------------------------------------
# Elementwise pieces

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    """Exact Gaussian-error-linear unit, x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    phi = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * phi


def softmax_rows(x: np.ndarray) -> np.ndarray:
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def sinusoidal_positions(n: int, d: int) -> np.ndarray:
    """Classic fixed sin/cos position table of shape (n, d)."""
    pe = np.zeros((n, d))
    position = np.arange(n)[:, None].astype(float)
    div = np.exp(np.arange(0, d, 2).astype(float) * (-math.log(10000.0) / d))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: pe[:, 1::2].shape[1]])
    return pe


# ---------------------------------------------------------------------------
# Parameterized layers


class Linear:
    def __init__(self, name: str, d_in: int, d_out: int, bias: bool = True):
        self.name = name
        self.d_in = d_in
        self.d_out = d_out
        self.bias = bias

    def specs(self):
        out = [(f"{self.name}.w", (self.d_in, self.d_out), "glorot")]
        if self.bias:
            out.append((f"{self.name}.b", (self.d_out,), "zeros"))
        return out

    def forward(self, params, x):
        w = params[f"{self.name}.w"]
        _record(self.name, x.shape[0] * self.d_in * self.d_out)
        y = x @ w
        if self.bias:
            y = y + params[f"{self.name}.b"]
        return y, x

    def backward(self, params, cache, dy, grads):
        x = cache
        w = params[f"{self.name}.w"]
        grads[f"{self.name}.w"] += x.T @ dy
        if self.bias:
            grads[f"{self.name}.b"] += dy.sum(axis=0)
        return dy @ w.T


class LayerNorm:
    def __init__(self, name: str, d: int, eps: float = 1e-5):
        self.name = name
        self.d = d
        self.eps = eps

    def specs(self):
        return [(f"{self.name}.g", (self.d,), "ones"),
                (f"{self.name}.b", (self.d,), "zeros")]

    def forward(self, params, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        y = xhat * params[f"{self.name}.g"] + params[f"{self.name}.b"]
        return y, (xhat, inv)

    def backward(self, params, cache, dy, grads):
        xhat, inv = cache
        g = params[f"{self.name}.g"]
        grads[f"{self.name}.g"] += (dy * xhat).sum(axis=0)
        grads[f"{self.name}.b"] += dy.sum(axis=0)
        dxhat = dy * g
        m = xhat.shape[-1]
        term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        return term * inv


class MultiHeadAttention:
    """Scaled dot-product attention over (N, d) token matrices.

    ``mask`` is a boolean (N_q, N_k) array, True where attention is blocked.
    The query path and key/value path may come from different sources (cross
    attention); ``backward`` returns separate gradients for each.
    """

    def __init__(self, name: str, d: int, heads: int):
        if d % heads != 0:
            raise ValueError("d must divide evenly into heads")
        self.name = name
        self.d = d
        self.heads = heads
        self.dh = d // heads
        self.wq = Linear(f"{name}.wq", d, d)
        self.wk = Linear(f"{name}.wk", d, d)
        self.wv = Linear(f"{name}.wv", d, d)
        self.wo = Linear(f"{name}.wo", d, d)

    def specs(self):
        return self.wq.specs() + self.wk.specs() + self.wv.specs() + self.wo.specs()

    def _split(self, x):
        n = x.shape[0]
        return x.reshape(n, self.heads, self.dh).transpose(1, 0, 2)

    def _merge(self, x):
        return x.transpose(1, 0, 2).reshape(x.shape[1], self.d)

    def forward(self, params, q_in, kv_in, mask=None):
        q, cq = self.wq.forward(params, q_in)
        k, ck = self.wk.forward(params, kv_in)
        v, cv = self.wv.forward(params, kv_in)
        qh, kh, vh = self._split(q), self._split(k), self._split(v)
        scale = 1.0 / math.sqrt(self.dh)
        _record(f"{self.name}.scores", qh.shape[1] * kh.shape[1] * self.d)
        scores = (qh @ kh.transpose(0, 2, 1)) * scale
        if mask is not None:
            scores = np.where(mask[None, :, :], MASK_FILL, scores)
        attn = softmax_rows(scores)
        _record(f"{self.name}.values", qh.shape[1] * kh.shape[1] * self.d)
        ctx = attn @ vh
        merged = self._merge(ctx)
        out, co = self.wo.forward(params, merged)
        cache = (cq, ck, cv, co, qh, kh, vh, attn, mask, scale)
        return out, cache

    def backward(self, params, cache, dout, grads):
        cq, ck, cv, co, qh, kh, vh, attn, mask, scale = cache
        dmerged = self.wo.backward(params, co, dout, grads)
        dctx = self._split(dmerged)
        dattn = dctx @ vh.transpose(0, 2, 1)
        dvh = attn.transpose(0, 2, 1) @ dctx
        dscores = attn * (dattn - np.sum(dattn * attn, axis=-1, keepdims=True))
        if mask is not None:
            dscores = np.where(mask[None, :, :], 0.0, dscores)
        dscores = dscores * scale
        dqh = dscores @ kh
        dkh = dscores.transpose(0, 2, 1) @ qh
        dq = self.wq.backward(params, cq, self._merge(dqh), grads)
        dk = self.wk.backward(params, ck, self._merge(dkh), grads)
        dv = self.wv.backward(params, cv, self._merge(dvh), grads)
        return dq, dk + dv


class FeedForward:
    def __init__(self, name: str, d: int, mult: int = 4):
        self.name = name
        self.lin1 = Linear(f"{name}.fc1", d, d * mult)
        self.lin2 = Linear(f"{name}.fc2", d * mult, d)

    def specs(self):
        return self.lin1.specs() + self.lin2.specs()

    def forward(self, params, x):
        h, c1 = self.lin1.forward(params, x)
        a = gelu(h)
        y, c2 = self.lin2.forward(params, a)
        return y, (c1, h, c2)

    def backward(self, params, cache, dy, grads):
        c1, h, c2 = cache
        da = self.lin2.backward(params, c2, dy, grads)
        dh = da * gelu_grad(h)
        return self.lin1.backward(params, c1, dh, grads)


class EncoderLayer:
    """Pre-norm self-attention block: x + attn(ln(x)), then x + ffn(ln(x))."""

    def __init__(self, name: str, d: int, heads: int, ffn_mult: int = 4):
        self.ln1 = LayerNorm(f"{name}.ln1", d)
        self.attn = MultiHeadAttention(f"{name}.attn", d, heads)
        self.ln2 = LayerNorm(f"{name}.ln2", d)
        self.ffn = FeedForward(f"{name}.ffn", d, ffn_mult)

    def specs(self):
        return self.ln1.specs() + self.attn.specs() + self.ln2.specs() + self.ffn.specs()

    def forward(self, params, x):
        n1, c_ln1 = self.ln1.forward(params, x)
        a, c_attn = self.attn.forward(params, n1, n1)
        x1 = x + a
        n2, c_ln2 = self.ln2.forward(params, x1)
        f, c_ffn = self.ffn.forward(params, n2)
        return x1 + f, (c_ln1, c_attn, c_ln2, c_ffn)

    def backward(self, params, cache, dy, grads):
        c_ln1, c_attn, c_ln2, c_ffn = cache
        df = self.ffn.backward(params, c_ffn, dy, grads)
        dx1 = dy + self.ln2.backward(params, c_ln2, df, grads)
        dq, dkv = self.attn.backward(params, c_attn, dx1, grads)
        return dx1 + self.ln1.backward(params, c_ln1, dq + dkv, grads)


class CrossAttentionLayer:
    """Pre-norm cross-attention fusion: queries from x, keys/values from memory."""

    def __init__(self, name: str, d: int, heads: int, ffn_mult: int = 4):
        self.ln1 = LayerNorm(f"{name}.ln1", d)
        self.attn = MultiHeadAttention(f"{name}.xattn", d, heads)
        self.ln2 = LayerNorm(f"{name}.ln2", d)
        self.ffn = FeedForward(f"{name}.ffn", d, ffn_mult)

    def specs(self):
        return self.ln1.specs() + self.attn.specs() + self.ln2.specs() + self.ffn.specs()

    def forward(self, params, x, memory):
        n1, c_ln1 = self.ln1.forward(params, x)
        a, c_attn = self.attn.forward(params, n1, memory)
        x1 = x + a
        n2, c_ln2 = self.ln2.forward(params, x1)
        f, c_ffn = self.ffn.forward(params, n2)
        return x1 + f, (c_ln1, c_attn, c_ln2, c_ffn)

    def backward(self, params, cache, dy, grads):
        c_ln1, c_attn, c_ln2, c_ffn = cache
        df = self.ffn.backward(params, c_ffn, dy, grads)
        dx1 = dy + self.ln2.backward(params, c_ln2, df, grads)
        dq, dmem = self.attn.backward(params, c_attn, dx1, grads)
        dx = dx1 + self.ln1.backward(params, c_ln1, dq, grads)
        return dx, dmem


class DecoderLayer:
    """Causal self-attention, cross-attention into the fused memory, then FFN."""

    def __init__(self, name: str, d: int, heads: int, ffn_mult: int = 4):
        self.ln1 = LayerNorm(f"{name}.ln1", d)
        self.self_attn = MultiHeadAttention(f"{name}.self", d, heads)
        self.ln2 = LayerNorm(f"{name}.ln2", d)
        self.cross = MultiHeadAttention(f"{name}.cross", d, heads)
        self.ln3 = LayerNorm(f"{name}.ln3", d)
        self.ffn = FeedForward(f"{name}.ffn", d, ffn_mult)

    def specs(self):
        return (self.ln1.specs() + self.self_attn.specs() + self.ln2.specs()
                + self.cross.specs() + self.ln3.specs() + self.ffn.specs())

    def forward(self, params, y, memory, causal_mask):
        n1, c_ln1 = self.ln1.forward(params, y)
        a, c_self = self.self_attn.forward(params, n1, n1, causal_mask)
        y1 = y + a
        n2, c_ln2 = self.ln2.forward(params, y1)
        x, c_cross = self.cross.forward(params, n2, memory)
        y2 = y1 + x
        n3, c_ln3 = self.ln3.forward(params, y2)
        f, c_ffn = self.ffn.forward(params, n3)
        return y2 + f, (c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn)

    def backward(self, params, cache, dy, grads):
        c_ln1, c_self, c_ln2, c_cross, c_ln3, c_ffn = cache
        df = self.ffn.backward(params, c_ffn, dy, grads)
        dy2 = dy + self.ln3.backward(params, c_ln3, df, grads)
        dxq, dmem = self.cross.backward(params, c_cross, dy2, grads)
        dy1 = dy2 + self.ln2.backward(params, c_ln2, dxq, grads)
        dq, dkv = self.self_attn.backward(params, c_self, dy1, grads)
        dy0 = dy1 + self.ln1.backward(params, c_ln1, dq + dkv, grads)
        return dy0, dmem


def causal_mask(n: int) -> np.ndarray:
    """(n, n) boolean mask, True above the diagonal (future positions)."""
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def init_params(specs, seed: int, rng_factory) -> dict[str, np.ndarray]:
    """Materialize parameters for a spec list of (name, shape, kind).

    Draw order is the sorted name order, so a given (config, seed) pair is
    reproducible regardless of layer construction order.
    """
    rng = rng_factory(seed, 0)
    params: dict[str, np.ndarray] = {}
    for name, shape, kind in sorted(specs, key=lambda s: s[0]):
        if name in params:
            raise ValueError(f"duplicate parameter name {name}")
        if kind == "glorot":
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            params[name] = rng.uniform(-limit, limit, size=shape)
        elif kind == "normal02":
            params[name] = rng.normal(0.0, 0.02, size=shape)
        elif kind == "zeros":
            params[name] = np.zeros(shape)
        elif kind == "ones":
            params[name] = np.ones(shape)
        else:
            raise ValueError(f"unknown init kind {kind}")
    return params


def zero_grads(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}
