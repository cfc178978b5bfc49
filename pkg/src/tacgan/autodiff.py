"""Reverse-mode automatic differentiation over dense float64 tensors.

A ``Tape`` records operations as they execute (define-by-run) and replays the
record in reverse to accumulate chain-rule gradients. Values are plain numpy
float64 arrays; variables are integer node ids issued by the tape that created
them, so ids from one tape must never be used with another.

Numerical conventions:

- relu's backward uses subgradient 0 at exactly 0.
- ``maximum`` routes the gradient to its first argument on ties.
- logsumexp subtracts the per-axis max before exponentiating, so constant
  shifts cannot overflow.
- softmax is never materialized on the forward path; classification losses go
  through ``gather_log_softmax``, which keeps everything in log space.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

VarId = int

UNARY_KINDS = ("relu", "log", "exp", "neg", "sigmoid", "square")
BINARY_KINDS = ("add", "sub", "mul", "matmul", "maximum")
REDUCE_KINDS = ("sum", "mean", "logsumexp")


def as_tensor(value) -> np.ndarray:
    """Coerce to a float64 array, rejecting NaN/Inf entries."""
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr.ravel()))[0])
        raise ValueError(f"non-finite entry at flat index {bad}")
    return arr


class _Node:
    __slots__ = ("op", "inputs", "value", "requires_grad", "meta")

    def __init__(self, op, inputs, value, requires_grad, meta=None):
        self.op = op
        self.inputs = inputs
        self.value = value
        self.requires_grad = requires_grad
        self.meta = meta


class Tape:
    """Append-only record of differentiable operations.

    Node ids are handed out in creation order, so every node's inputs have
    strictly smaller ids and a single reverse sweep visits consumers before
    producers. Tapes are single-threaded and rebuilt per forward pass.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _push(self, node: _Node) -> VarId:
        self.nodes.append(node)
        return len(self.nodes) - 1

    def _node(self, vid: VarId) -> _Node:
        if not 0 <= vid < len(self.nodes):
            raise ValueError(f"variable id {vid} not issued by this tape")
        return self.nodes[vid]

    def value(self, vid: VarId) -> np.ndarray:
        return self._node(vid).value

    # -- construction ----------------------------------------------------

    def leaf(self, value, requires_grad: bool = False) -> VarId:
        """Insert a constant or parameter node. Rejects non-finite values."""
        return self._push(_Node("leaf", (), as_tensor(value), requires_grad))

    def unary(self, kind: str, x: VarId) -> VarId:
        xn = self._node(x)
        v = xn.value
        if kind == "relu":
            out = np.maximum(v, 0.0)
        elif kind == "log":
            if np.any(v <= 0.0):
                bad = int(np.flatnonzero(v.ravel() <= 0.0)[0])
                raise ValueError(
                    f"log: non-positive entry {v.ravel()[bad]} at flat index {bad}"
                )
            out = np.log(v)
        elif kind == "exp":
            out = np.exp(v)
        elif kind == "neg":
            out = -v
        elif kind == "sigmoid":
            out = _sigmoid(v)
        elif kind == "square":
            out = v * v
        else:
            raise ValueError(f"unknown unary kind {kind!r}")
        return self._push(_Node(kind, (x,), out, xn.requires_grad))

    def binary(self, kind: str, a: VarId, b: VarId) -> VarId:
        an, bn = self._node(a), self._node(b)
        va, vb = an.value, bn.value
        if kind == "matmul":
            if va.ndim != 2 or vb.ndim != 2 or va.shape[1] != vb.shape[0]:
                raise ValueError(
                    f"matmul: shapes {va.shape} and {vb.shape} do not conform"
                )
            out = va @ vb
        elif kind in ("add", "sub", "mul", "maximum"):
            try:
                np.broadcast_shapes(va.shape, vb.shape)
            except ValueError:
                raise ValueError(
                    f"{kind}: shapes {va.shape} and {vb.shape} do not broadcast"
                ) from None
            if kind == "add":
                out = va + vb
            elif kind == "sub":
                out = va - vb
            elif kind == "mul":
                out = va * vb
            else:
                out = np.maximum(va, vb)
        else:
            raise ValueError(f"unknown binary kind {kind!r}")
        rg = an.requires_grad or bn.requires_grad
        return self._push(_Node(kind, (a, b), out, rg))

    def reduce(self, kind: str, x: VarId, axis: int | None = None) -> VarId:
        xn = self._node(x)
        v = xn.value
        if axis is not None:
            if not -v.ndim <= axis < v.ndim:
                raise ValueError(f"axis {axis} out of range for rank {v.ndim}")
            axis = axis % v.ndim if v.ndim else 0
        if kind == "sum":
            out = v.sum(axis=axis)
        elif kind == "mean":
            out = v.mean(axis=axis)
        elif kind == "logsumexp":
            m = v.max(axis=axis, keepdims=True) if v.size else v
            shifted = np.exp(v - m)
            out = np.log(shifted.sum(axis=axis, keepdims=True)) + m
            out = out.reshape(np.sum(v, axis=axis).shape)
        else:
            raise ValueError(f"unknown reduce kind {kind!r}")
        meta = (axis, v.shape)
        return self._push(_Node(kind, (x,), out, xn.requires_grad, meta))

    def concat(self, parts: list[VarId], axis: int = 1) -> VarId:
        """Concatenate along an axis; the backward pass splits the gradient.

        Not part of the minimal op set but needed to feed label one-hots next
        to gradient-carrying activations (conditional discriminators, stable
        softplus via logsumexp over [s, 0]).
        """
        ns = [self._node(p) for p in parts]
        out = np.concatenate([n.value for n in ns], axis=axis)
        rg = any(n.requires_grad for n in ns)
        sizes = [n.value.shape[axis] for n in ns]
        return self._push(_Node("concat", tuple(parts), out, rg, (axis, sizes)))

    def gather_log_softmax(self, logits: VarId, labels) -> VarId:
        """Per-row log softmax probability of the given class index.

        Row i of the result is logits[i, y_i] - logsumexp(logits[i, :]).
        """
        xn = self._node(logits)
        v = xn.value
        if v.ndim != 2:
            raise ValueError(f"gather_log_softmax: logits must be 2-d, got {v.shape}")
        y = np.asarray(labels)
        if y.shape != (v.shape[0],):
            raise ValueError(
                f"gather_log_softmax: need {v.shape[0]} labels, got shape {y.shape}"
            )
        k = v.shape[1]
        if np.any((y < 0) | (y >= k)):
            bad = int(y[(y < 0) | (y >= k)][0])
            raise ValueError(f"label {bad} out of range for {k} classes")
        y = y.astype(np.intp)
        m = v.max(axis=1, keepdims=True)
        lse = np.log(np.exp(v - m).sum(axis=1, keepdims=True)) + m
        out = v[np.arange(v.shape[0]), y] - lse[:, 0]
        meta = (y, lse)
        return self._push(_Node("gather_ls", (logits,), out, xn.requires_grad, meta))

    # -- differentiation -------------------------------------------------

    def backward(self, root: VarId) -> dict[VarId, np.ndarray]:
        """Chain-rule sweep from a scalar-shaped root.

        Returns the gradient of root with respect to every requires_grad leaf
        on the tape (zeros for leaves the root does not depend on).
        """
        rn = self._node(root)
        if rn.value.size != 1:
            raise ValueError(f"backward root must be scalar-shaped, got {rn.value.shape}")
        grads: list[np.ndarray | None] = [None] * len(self.nodes)
        grads[root] = np.ones_like(rn.value)
        for nid in range(root, -1, -1):
            g = grads[nid]
            if g is None:
                continue
            node = self.nodes[nid]
            if node.op == "leaf" or not node.requires_grad:
                continue
            for iid, ig in _backward_rule(self, node, g):
                if self.nodes[iid].requires_grad:
                    prev = grads[iid]
                    grads[iid] = ig if prev is None else prev + ig
        out = {}
        for nid, node in enumerate(self.nodes):
            if node.op == "leaf" and node.requires_grad:
                g = grads[nid]
                out[nid] = np.zeros_like(node.value) if g is None else g
        return out


def _sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _expand(grad: np.ndarray, axis: int | None, shape: tuple) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(grad, shape)
    return np.broadcast_to(np.expand_dims(grad, axis), shape)


def _backward_rule(tape: Tape, node: _Node, g: np.ndarray):
    op = node.op
    ins = node.inputs
    if op == "relu":
        x = tape.nodes[ins[0]].value
        yield ins[0], g * (x > 0.0)
    elif op == "log":
        yield ins[0], g / tape.nodes[ins[0]].value
    elif op == "exp":
        yield ins[0], g * node.value
    elif op == "neg":
        yield ins[0], -g
    elif op == "sigmoid":
        yield ins[0], g * node.value * (1.0 - node.value)
    elif op == "square":
        yield ins[0], g * 2.0 * tape.nodes[ins[0]].value
    elif op == "add":
        a, b = ins
        yield a, _unbroadcast(g, tape.nodes[a].value.shape)
        yield b, _unbroadcast(g, tape.nodes[b].value.shape)
    elif op == "sub":
        a, b = ins
        yield a, _unbroadcast(g, tape.nodes[a].value.shape)
        yield b, _unbroadcast(-g, tape.nodes[b].value.shape)
    elif op == "mul":
        a, b = ins
        va, vb = tape.nodes[a].value, tape.nodes[b].value
        yield a, _unbroadcast(g * vb, va.shape)
        yield b, _unbroadcast(g * va, vb.shape)
    elif op == "matmul":
        a, b = ins
        va, vb = tape.nodes[a].value, tape.nodes[b].value
        yield a, g @ vb.T
        yield b, va.T @ g
    elif op == "maximum":
        a, b = ins
        va, vb = tape.nodes[a].value, tape.nodes[b].value
        mask = va >= vb
        yield a, _unbroadcast(g * mask, va.shape)
        yield b, _unbroadcast(g * ~mask, vb.shape)
    elif op == "sum":
        axis, shape = node.meta
        yield ins[0], _expand(g, axis, shape)
    elif op == "mean":
        axis, shape = node.meta
        n = np.prod(shape) if axis is None else shape[axis]
        yield ins[0], _expand(g / n, axis, shape)
    elif op == "logsumexp":
        axis, shape = node.meta
        x = tape.nodes[ins[0]].value
        lse = _expand(node.value, axis, shape)
        yield ins[0], _expand(g, axis, shape) * np.exp(x - lse)
    elif op == "concat":
        axis, sizes = node.meta
        start = 0
        for iid, size in zip(ins, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + size)
            yield iid, g[tuple(sl)]
            start += size
    elif op == "gather_ls":
        y, lse = node.meta
        x = tape.nodes[ins[0]].value
        grad = -np.exp(x - lse) * g[:, None]
        grad[np.arange(x.shape[0]), y] += g
        yield ins[0], grad
    else:
        raise AssertionError(f"no backward rule for op {op!r}")


def grad_check(
    f: Callable[[Tape, VarId], VarId], x, eps: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` builds a scalar-valued expression from a tape and the leaf id of x.
    The relative error per coordinate is |analytic - numeric| / max(1, |analytic|).
    """
    x = as_tensor(x)
    tape = Tape()
    xid = tape.leaf(x, requires_grad=True)
    analytic = tape.backward(f(tape, xid))[xid]

    def eval_at(pt: np.ndarray) -> float:
        t = Tape()
        return float(t.value(f(t, t.leaf(pt))))

    worst = 0.0
    flat = x.ravel()
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = eps
        hi = eval_at((flat + bump).reshape(x.shape))
        lo = eval_at((flat - bump).reshape(x.shape))
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic.ravel()[i]
        worst = max(worst, abs(a - numeric) / max(1.0, abs(a)))
    return worst
