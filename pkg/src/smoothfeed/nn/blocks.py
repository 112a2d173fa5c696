"""Composite blocks shared by the two models: instance-guided mask blocks,
target attention (single- and multi-head), and the multi-gate
mixture-of-experts head."""

from __future__ import annotations

import numpy as np

from .graph import Node, Op
from .layers import (Concat, Dense, ExpandAxis, MaskedSoftmax, MatMul, Mul,
                     LayerNorm, Relu, Scale, SliceLast, Softmax, SqueezeAxis,
                     Stack, SwapLast2, WeightedSum)


class MaskBlock:
    """Project the embedding, gate it with an input-derived mask, then
    relu + layer-norm into a fixed-width hidden vector."""

    def __init__(self, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                 mask_hidden: int | None = None):
        mh = mask_hidden if mask_hidden is not None else max(d_in // 2, 8)
        self.mask_fc1 = Dense(f"{name}.mask_fc1", d_in, mh, rng)
        self.mask_fc2 = Dense(f"{name}.mask_fc2", mh, d_in, rng)
        self.proj = Dense(f"{name}.proj", d_in, d_in, rng)
        self.fc = Dense(f"{name}.fc", d_in, d_out, rng)
        self.norm = LayerNorm(f"{name}.norm", d_out)
        self._relu = Relu()
        self._mul = Mul()

    def ops(self):
        return [self.mask_fc1, self.mask_fc2, self.proj, self.fc, self.norm]

    def __call__(self, v_emb: Node) -> Node:
        mask = self.mask_fc2(self._relu(self.mask_fc1(v_emb)))
        masked = self._mul(mask, self.proj(v_emb))
        return self.norm(self._relu(self.fc(masked)))


class TargetAttention:
    """Scaled dot-product attention with a single query vector.

    Query projects from the target representation, keys/values from the
    sequence rows; a fully-masked sequence contributes a zero context.
    """

    def __init__(self, name: str, d_query: int, d_row: int, d_attn: int,
                 rng: np.random.Generator):
        self.d_attn = d_attn
        self.q = Dense(f"{name}.q", d_query, d_attn, rng)
        self.k = Dense(f"{name}.k", d_row, d_attn, rng)
        self.v = Dense(f"{name}.v", d_row, d_attn, rng)
        self._scale = Scale(1.0 / float(np.sqrt(d_attn)))
        self._softmax = MaskedSoftmax()

    def ops(self):
        return [self.q, self.k, self.v]

    def __call__(self, query: Node, rows: Node, mask: np.ndarray) -> Node:
        q = ExpandAxis(1)(self.q(query))                       # (B, 1, d)
        keys_t = SwapLast2()(self.k(rows))                     # (B, d, L)
        logits = SqueezeAxis(1)(MatMul()(q, keys_t))           # (B, L)
        weights = self._softmax(self._scale(logits), mask)
        return WeightedSum()(weights, self.v(rows))            # (B, d)


class MultiHeadTargetAttention:
    """n_heads independent target attentions, concatenated and projected
    twice (head-merge projection, then output projection; both bias-free so
    an empty sequence still maps to a zero vector)."""

    def __init__(self, name: str, d_query: int, d_row: int, n_heads: int,
                 d_head: int, d_out: int, rng: np.random.Generator):
        self.n_heads = n_heads
        self.d_head = d_head
        total = n_heads * d_head
        self.q = Dense(f"{name}.q", d_query, total, rng)
        self.k = Dense(f"{name}.k", d_row, total, rng)
        self.v = Dense(f"{name}.v", d_row, total, rng)
        self.merge = Dense(f"{name}.merge", total, d_out, rng, bias=False)
        self.out = Dense(f"{name}.out", d_out, d_out, rng, bias=False)
        self._scale = Scale(1.0 / float(np.sqrt(d_head)))

    def ops(self):
        return [self.q, self.k, self.v, self.merge, self.out]

    def __call__(self, query: Node, rows: Node, mask: np.ndarray) -> Node:
        q_all = self.q(query)       # (B, H*dh)
        k_all = self.k(rows)        # (B, L, H*dh)
        v_all = self.v(rows)
        heads = []
        for h in range(self.n_heads):
            lo, hi = h * self.d_head, (h + 1) * self.d_head
            q = ExpandAxis(1)(SliceLast(lo, hi)(q_all))        # (B, 1, dh)
            keys_t = SwapLast2()(SliceLast(lo, hi)(k_all))     # (B, dh, L)
            logits = SqueezeAxis(1)(MatMul()(q, keys_t))       # (B, L)
            weights = MaskedSoftmax()(self._scale(logits), mask)
            heads.append(WeightedSum()(weights, SliceLast(lo, hi)(v_all)))
        merged = self.merge(Concat()(*heads))
        return self.out(merged)


class Expert:
    """Two relu layers of equal width."""

    def __init__(self, name: str, d_in: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Dense(f"{name}.fc1", d_in, hidden, rng)
        self.fc2 = Dense(f"{name}.fc2", hidden, hidden, rng)
        self._relu = Relu()

    def ops(self):
        return [self.fc1, self.fc2]

    def __call__(self, x: Node) -> Node:
        return self._relu(self.fc2(self._relu(self.fc1(x))))


class MoeHead:
    """Multi-gate mixture-of-experts: shared experts, one softmax gate and
    one tower per task. Returns per-task logits of shape (B,)."""

    def __init__(self, name: str, d_in: int, n_experts: int, n_tasks: int,
                 expert_hidden: int, tower_hidden: int, rng: np.random.Generator):
        self.n_experts = n_experts
        self.n_tasks = n_tasks
        self.experts = [Expert(f"{name}.expert{j}", d_in, expert_hidden, rng)
                        for j in range(n_experts)]
        self.gates = [Dense(f"{name}.gate{i}", d_in, n_experts, rng)
                      for i in range(n_tasks)]
        self.towers = [self._tower(f"{name}.tower{i}", expert_hidden, tower_hidden, rng)
                       for i in range(n_tasks)]
        self._softmax = Softmax()
        self._relu = Relu()

    @staticmethod
    def _tower(name, d_in, hidden, rng):
        return (Dense(f"{name}.fc1", d_in, hidden, rng),
                Dense(f"{name}.fc2", hidden, 1, rng))

    def ops(self):
        out: list[Op] = []
        for e in self.experts:
            out.extend(e.ops())
        out.extend(self.gates)
        for fc1, fc2 in self.towers:
            out.extend([fc1, fc2])
        return out

    def gate_weights(self, x: Node, task: int) -> Node:
        return self._softmax(self.gates[task](x))

    def __call__(self, x: Node) -> list[Node]:
        stacked = Stack()(*[e(x) for e in self.experts])       # (B, K, H)
        logits = []
        for i in range(self.n_tasks):
            gw = self.gate_weights(x, i)                       # (B, K)
            fused = WeightedSum()(gw, stacked)                 # (B, H)
            fc1, fc2 = self.towers[i]
            logits.append(SqueezeAxis(1)(fc2(self._relu(fc1(fused)))))
        return logits
