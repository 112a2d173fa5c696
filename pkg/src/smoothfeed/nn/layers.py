"""Primitive differentiable ops: affine maps, lookups, normalization,
softmax variants, and the handful of structural ops the two model graphs
need (concat, stack, batched matmul, weighted pooling)."""

from __future__ import annotations

import numpy as np

from .graph import Node, NonFiniteError, Op, Parameter, ShapeError


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None) -> np.ndarray:
    """Row-wise affine map x @ w + b with explicit shape checks."""
    x = np.asarray(x)
    w = np.asarray(w)
    if w.ndim != 2:
        raise ShapeError(f"weight must be 2-d, got {w.shape}")
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"input width {x.shape[-1]} != weight rows {w.shape[0]}")
    out = x @ w
    if b is not None:
        b = np.asarray(b)
        if b.shape != (w.shape[1],):
            raise ShapeError(f"bias shape {b.shape} != ({w.shape[1]},)")
        out = out + b
    return out


def softmax(x: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax over the last axis, shift-invariant and simplex-valued."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("softmax input is not finite")
    z = x / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _glorot(rng: np.random.Generator, d_in: int, d_out: int) -> np.ndarray:
    limit = float(np.sqrt(6.0 / (d_in + d_out)))
    return rng.uniform(-limit, limit, size=(d_in, d_out)).astype(np.float32)


class Dense(Op):
    """y = x @ W + b over the last axis; leading axes are batch-like."""

    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, zero_init: bool = False):
        self.d_in = d_in
        self.d_out = d_out
        if zero_init:
            w0 = np.zeros((d_in, d_out), dtype=np.float32)
        else:
            w0 = _glorot(rng, d_in, d_out)
        self.w = Parameter(f"{name}.w", w0)
        self.b = Parameter(f"{name}.b", np.zeros(d_out, dtype=np.float32)) if bias else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    def forward(self, x):
        out = dense_forward(x, self.w.value, self.b.value if self.b is not None else None)
        return out, x

    def backward(self, ctx, g):
        x = ctx
        x2 = x.reshape(-1, self.d_in)
        g2 = g.reshape(-1, self.d_out)
        self.w.grad += (x2.T @ g2).astype(self.w.grad.dtype, copy=False)
        if self.b is not None:
            self.b.grad += g2.sum(axis=0).astype(self.b.grad.dtype, copy=False)
        return (g @ self.w.value.T.astype(g.dtype, copy=False),)


class Embedding(Op):
    """Integer index lookup into a trainable table."""

    def __init__(self, name: str, vocab: int, dim: int, rng: np.random.Generator,
                 scale: float = 0.05):
        self.vocab = vocab
        self.dim = dim
        self.table = Parameter(
            name, (rng.standard_normal((vocab, dim)) * scale).astype(np.float32))

    def params(self):
        return [self.table]

    def __call__(self, indices: np.ndarray) -> Node:
        idx = np.asarray(indices)
        if idx.size and (idx.min() < 0 or idx.max() >= self.vocab):
            raise IndexError(
                f"index out of range for embedding {self.table.name!r} "
                f"(vocab {self.vocab}): [{idx.min()}, {idx.max()}]")
        out = self.table.value[idx]
        return Node(out, op=self, inputs=(), ctx=idx)

    def backward(self, ctx, g):
        idx = ctx
        np.add.at(self.table.grad, idx.reshape(-1),
                  g.reshape(-1, self.dim).astype(self.table.grad.dtype, copy=False))
        return ()


class AutoDisEmbed(Op):
    """Soft discretization of a scalar feature.

    A 1-d affine map scores the value against K meta-embeddings; the softmax
    of those scores mixes the meta rows, so the output always lies in their
    convex hull.
    """

    def __init__(self, name: str, k: int, dim: int, rng: np.random.Generator,
                 temperature: float = 1.0):
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.k = k
        self.dim = dim
        self.temperature = float(temperature)
        self.meta = Parameter(
            f"{name}.meta", (rng.standard_normal((k, dim)) * 0.05).astype(np.float32))
        self.score_w = Parameter(
            f"{name}.score_w", rng.uniform(-1.0, 1.0, size=k).astype(np.float32))
        self.score_b = Parameter(
            f"{name}.score_b", np.zeros(k, dtype=np.float32))

    def params(self):
        return [self.meta, self.score_w, self.score_b]

    def forward(self, values):
        v = np.asarray(values)
        logits = v[..., None] * self.score_w.value + self.score_b.value
        wts = softmax(logits, self.temperature)
        out = wts @ self.meta.value.astype(wts.dtype, copy=False)
        return out, (v, wts)

    def backward(self, ctx, g):
        v, wts = ctx
        meta = self.meta.value.astype(g.dtype, copy=False)
        self.meta.grad += (wts.reshape(-1, self.k).T
                           @ g.reshape(-1, self.dim)).astype(self.meta.grad.dtype, copy=False)
        g_wts = g @ meta.T
        g_logits = (g_wts - (g_wts * wts).sum(axis=-1, keepdims=True)) * wts / self.temperature
        gl2 = g_logits.reshape(-1, self.k)
        self.score_w.grad += (gl2 * v.reshape(-1, 1)).sum(axis=0).astype(
            self.score_w.grad.dtype, copy=False)
        self.score_b.grad += gl2.sum(axis=0).astype(self.score_b.grad.dtype, copy=False)
        g_v = (g_logits * self.score_w.value).sum(axis=-1)
        return (g_v,)


class LayerNorm(Op):
    def __init__(self, name: str, dim: int, eps: float = 1e-5):
        self.dim = dim
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(dim, dtype=np.float32))
        self.beta = Parameter(f"{name}.beta", np.zeros(dim, dtype=np.float32))

    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu) * inv
        out = xhat * self.gamma.value + self.beta.value
        return out, (xhat, inv)

    def backward(self, ctx, g):
        xhat, inv = ctx
        g2 = g.reshape(-1, self.dim)
        xh2 = xhat.reshape(-1, self.dim)
        self.gamma.grad += (g2 * xh2).sum(axis=0).astype(self.gamma.grad.dtype, copy=False)
        self.beta.grad += g2.sum(axis=0).astype(self.beta.grad.dtype, copy=False)
        gh = g * self.gamma.value
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return (gx,)


class Relu(Op):
    def forward(self, x):
        return np.maximum(x, 0.0), x > 0

    def backward(self, ctx, g):
        return (g * ctx,)


class Sigmoid(Op):
    def forward(self, x):
        out = _stable_sigmoid(x)
        return out, out

    def backward(self, ctx, g):
        y = ctx
        return (g * y * (1.0 - y),)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


class Softmax(Op):
    """Softmax over the last axis (used by the expert gates)."""

    def __init__(self, temperature: float = 1.0):
        self.temperature = float(temperature)

    def forward(self, x):
        y = softmax(x, self.temperature)
        return y, y

    def backward(self, ctx, g):
        y = ctx
        gx = (g - (g * y).sum(axis=-1, keepdims=True)) * y / self.temperature
        return (gx,)


class MaskedSoftmax(Op):
    """Softmax over unmasked positions; a fully-masked row yields zeros."""

    def __call__(self, logits: Node, mask: np.ndarray) -> Node:
        out, ctx = self.forward(logits.value, mask)
        return Node(out, op=self, inputs=(logits,), ctx=ctx)

    def forward(self, x, mask):
        m = np.asarray(mask, dtype=x.dtype)
        if m.shape != x.shape:
            raise ShapeError(f"mask shape {m.shape} != logits shape {x.shape}")
        neg = np.where(m > 0, x, -np.inf)
        hi = neg.max(axis=-1, keepdims=True)
        hi = np.where(np.isfinite(hi), hi, 0.0)
        e = np.exp(neg - hi) * m
        denom = e.sum(axis=-1, keepdims=True)
        y = np.where(denom > 0, e / np.where(denom > 0, denom, 1.0), 0.0)
        return y, y

    def backward(self, ctx, g):
        y = ctx
        gx = (g - (g * y).sum(axis=-1, keepdims=True)) * y
        return (gx,)


class Mul(Op):
    """Elementwise product of two same-shape tensors."""

    def forward(self, a, b):
        if np.shape(a) != np.shape(b):
            raise ShapeError(f"elementwise shapes differ: {np.shape(a)} vs {np.shape(b)}")
        return a * b, (a, b)

    def backward(self, ctx, g):
        a, b = ctx
        return (g * b, g * a)


class MatMul(Op):
    """a @ b for 2-d or equal-rank batched operands."""

    def forward(self, a, b):
        if a.ndim != b.ndim:
            raise ShapeError(f"matmul ranks differ: {a.ndim} vs {b.ndim}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
        if a.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul batch dims differ: {a.shape} vs {b.shape}")
        return a @ b, (a, b)

    def backward(self, ctx, g):
        a, b = ctx
        return (g @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ g)


class SwapLast2(Op):
    def forward(self, x):
        return np.swapaxes(x, -1, -2), None

    def backward(self, ctx, g):
        return (np.swapaxes(g, -1, -2),)


class ExpandAxis(Op):
    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, x):
        return np.expand_dims(x, self.axis), None

    def backward(self, ctx, g):
        return (np.squeeze(g, axis=self.axis),)


class SqueezeAxis(Op):
    def __init__(self, axis: int):
        self.axis = axis

    def forward(self, x):
        if x.shape[self.axis] != 1:
            raise ShapeError(f"cannot squeeze axis {self.axis} of shape {x.shape}")
        return np.squeeze(x, axis=self.axis), None

    def backward(self, ctx, g):
        return (np.expand_dims(g, self.axis),)


class SliceLast(Op):
    """Static slice [start:stop] of the last axis."""

    def __init__(self, start: int, stop: int):
        self.start = start
        self.stop = stop

    def forward(self, x):
        return x[..., self.start:self.stop], x.shape

    def backward(self, ctx, g):
        full = np.zeros(ctx, dtype=g.dtype)
        full[..., self.start:self.stop] = g
        return (full,)


class Concat(Op):
    """Concatenation along the last axis."""

    def forward(self, *xs):
        widths = [x.shape[-1] for x in xs]
        return np.concatenate(xs, axis=-1), widths

    def backward(self, ctx, g):
        widths = ctx
        outs = []
        at = 0
        for w in widths:
            outs.append(g[..., at:at + w])
            at += w
        return tuple(outs)


class Stack(Op):
    """Stack K same-shape (B, D) inputs into (B, K, D)."""

    def forward(self, *xs):
        return np.stack(xs, axis=1), len(xs)

    def backward(self, ctx, g):
        k = ctx
        return tuple(g[:, i] for i in range(k))


class WeightedSum(Op):
    """Pool (B, K, D) rows with per-row weights (B, K) -> (B, D)."""

    def forward(self, w, rows):
        if w.shape != rows.shape[:-1]:
            raise ShapeError(f"weights {w.shape} do not match rows {rows.shape}")
        out = np.einsum("bk,bkd->bd", w, rows)
        return out, (w, rows)

    def backward(self, ctx, g):
        w, rows = ctx
        gw = np.einsum("bd,bkd->bk", g, rows)
        grows = np.einsum("bk,bd->bkd", w, g)
        return (gw, grows)


class Scale(Op):
    def __init__(self, factor: float):
        self.factor = float(factor)

    def forward(self, x):
        return x * self.factor, None

    def backward(self, ctx, g):
        return (g * self.factor,)


class SumAll(Op):
    """Reduce to a scalar; the usual way to terminate test graphs."""

    def forward(self, x):
        return np.asarray(x.sum(), dtype=x.dtype), (x.shape, x.dtype)

    def backward(self, ctx, g):
        shape, dtype = ctx
        return (np.full(shape, g, dtype=dtype),)


class AddN(Op):
    """Sum of scalar nodes."""

    def forward(self, *xs):
        total = xs[0]
        for x in xs[1:]:
            total = total + x
        return total, len(xs)

    def backward(self, ctx, g):
        return tuple(g for _ in range(ctx))


class WeightedSigmoidBCE(Op):
    """Binary cross-entropy on logits with per-class weights.

    loss = mean_i w(y_i) * [max(x,0) - x*y + log(1 + exp(-|x|))], the
    numerically stable fused form. Gradient is w * (sigmoid(x) - y) / n.
    """

    def __init__(self, pos_weight: float = 1.0, neg_weight: float = 1.0):
        self.pos_weight = float(pos_weight)
        self.neg_weight = float(neg_weight)

    def __call__(self, logits: Node, labels: np.ndarray) -> Node:
        out, ctx = self.forward(logits.value, labels)
        return Node(out, op=self, inputs=(logits,), ctx=ctx)

    def forward(self, x, labels):
        y = np.asarray(labels, dtype=x.dtype)
        if y.shape != x.shape:
            raise ShapeError(f"labels shape {y.shape} != logits shape {x.shape}")
        w = np.where(y > 0.5, x.dtype.type(self.pos_weight), x.dtype.type(self.neg_weight))
        per = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
        loss = np.asarray((w * per).sum() / x.size, dtype=x.dtype)
        return loss, (x, y, w)

    def backward(self, ctx, g):
        x, y, w = ctx
        gx = w * (_stable_sigmoid(x) - y) / x.size
        return (gx * g,)
