"""Reverse-mode gradients over an explicit layer graph.

The two model topologies in this package are fixed, so there is no general
expression autodiff here: each op knows its own backward pass, forward
builds a DAG of `Node`s, and `backward` walks it once in reverse
topological order. Parameters live inside ops and accumulate their own
gradients; `Node.grad` only carries gradients for intermediate values.

All model state is float32. Ops preserve the dtype of their inputs so the
test suite can push float64 through the same code when comparing against
finite differences.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np


class GraphError(Exception):
    """Structural problem in the op graph (e.g. a cycle)."""


class ShapeError(ValueError):
    """Operand dimensions do not conform."""


class NonFiniteError(FloatingPointError):
    """A value that must be finite is NaN or infinite."""


class Parameter:
    """A named trainable tensor with gradient and Adam state."""

    __slots__ = ("name", "value", "grad", "adam_m", "adam_v", "step")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float32)
        self.grad = np.zeros_like(self.value)
        self.adam_m = np.zeros_like(self.value)
        self.adam_v = np.zeros_like(self.value)
        self.step = 0

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"Parameter({self.name!r}, shape={self.value.shape}, step={self.step})"


class Node:
    """One value in a forward pass: the output of `op` applied to `inputs`."""

    __slots__ = ("value", "op", "inputs", "ctx", "grad")

    def __init__(self, value: np.ndarray, op: "Op | None" = None,
                 inputs: tuple["Node", ...] = (), ctx=None):
        self.value = value
        self.op = op
        self.inputs = inputs
        self.ctx = ctx
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return np.shape(self.value)


def constant(value: np.ndarray | float, dtype=np.float32) -> Node:
    """Wrap an array as a graph input; gradients flow to it but no further."""
    return Node(np.asarray(value, dtype=dtype))


class Op:
    """Base class for graph ops.

    Subclasses implement `forward(*arrays) -> (out, ctx)` and
    `backward(ctx, grad_out) -> tuple of input grads` (entries may be None
    for non-differentiable inputs). Ops owning Parameters accumulate
    parameter gradients inside `backward` and list them via `params()`.
    """

    def forward(self, *xs):
        raise NotImplementedError

    def backward(self, ctx, grad_out):
        raise NotImplementedError

    def params(self) -> list[Parameter]:
        return []

    def __call__(self, *inputs: Node) -> Node:
        out, ctx = self.forward(*[n.value for n in inputs])
        return Node(out, op=self, inputs=tuple(inputs), ctx=ctx)


def _topo_order(root: Node) -> list[Node]:
    """Reverse-postorder DFS with cycle detection."""
    order: list[Node] = []
    state: dict[int, int] = {}  # id -> 1 visiting, 2 done
    stack: list[tuple[Node, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            state[id(node)] = 2
            order.append(node)
            continue
        mark = state.get(id(node), 0)
        if mark == 2:
            continue
        if mark == 1:
            raise GraphError("cycle detected in op graph")
        state[id(node)] = 1
        stack.append((node, True))
        for inp in node.inputs:
            if state.get(id(inp), 0) == 1:
                raise GraphError("cycle detected in op graph")
            if state.get(id(inp), 0) == 0:
                stack.append((inp, False))
    return order


def backward(loss: Node) -> None:
    """Populate gradients of every node and parameter reachable from `loss`.

    `loss` must be a scalar (size-1) node. Parameter gradients accumulate,
    so callers zero them between steps.
    """
    if np.size(loss.value) != 1:
        raise ShapeError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    if not np.all(np.isfinite(loss.value)):
        raise NonFiniteError("loss is not finite")

    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.value)
    for node in reversed(order):
        if node.op is None or node.grad is None:
            continue
        in_grads = node.op.backward(node.ctx, node.grad)
        for inp, g in zip(node.inputs, in_grads):
            if g is None:
                continue
            if inp.grad is None:
                inp.grad = np.zeros_like(inp.value)
            inp.grad += g


def collect_params(ops: Iterable[Op]) -> list[Parameter]:
    """Flatten parameters from `ops`, enforcing unique names."""
    seen: dict[str, Parameter] = {}
    out: list[Parameter] = []
    for op in ops:
        for p in op.params():
            if p.name in seen:
                if seen[p.name] is p:
                    continue  # shared parameter, count once
                raise GraphError(f"duplicate parameter name: {p.name}")
            seen[p.name] = p
            out.append(p)
    return out


def assert_finite(x: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains non-finite values")
