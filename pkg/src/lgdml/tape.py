"""Minimal reverse-mode differentiation over matrix ops.

Each op computes its forward value with numpy and registers a hand-derived
vector-Jacobian product per input. backward() walks the graph once and
accumulates gradients on every Var. No broadcasting magic beyond what the
ops here explicitly support; loss modules build custom fused ops with
``op(value, parents)`` when a composite rule is cleaner than composition.

Targets that must not receive gradient (language-side matrices) are kept
as plain ndarrays outside the graph, so their gradient is structurally
zero rather than merely small.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import simcore

_SAFE_DIST = 1e-12


class Var:
    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents: Sequence[tuple["Var", Callable]] = ()):
        self.value = np.asarray(value)
        self.parents = tuple(parents)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape


def op(value, parents: Sequence[tuple[Var, Callable]]) -> Var:
    """Create a node from a precomputed forward value and its VJPs."""
    return Var(value, parents)


def leaf(value) -> Var:
    return Var(value)


def _as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def backward(out: Var) -> None:
    """Accumulate d(out)/d(node) into node.grad for the whole graph."""
    if out.value.size != 1:
        raise ValueError("backward() expects a scalar output")
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    for node in order:
        node.grad = None
    out.grad = np.ones_like(out.value)
    for node in reversed(order):
        if node.grad is None:
            continue
        for parent, vjp in node.parents:
            contrib = vjp(node.grad)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            parent.grad = parent.grad + contrib


def grad_of(out: Var, leaves: Sequence[Var]) -> list[np.ndarray]:
    backward(out)
    return [v.grad if v.grad is not None else np.zeros_like(v.value) for v in leaves]


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return op(a.value + b.value, [
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(g, b.value.shape)),
    ])


def sub(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return op(a.value - b.value, [
        (a, lambda g: _unbroadcast(g, a.value.shape)),
        (b, lambda g: _unbroadcast(-g, b.value.shape)),
    ])


def mul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return op(a.value * b.value, [
        (a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
        (b, lambda g: _unbroadcast(g * a.value, b.value.shape)),
    ])


def scale(a, s: float) -> Var:
    a = _as_var(a)
    return op(a.value * s, [(a, lambda g: g * s)])


def add_const(a, c) -> Var:
    a = _as_var(a)
    return op(a.value + c, [(a, lambda g: g)])


def neg(a) -> Var:
    return scale(a, -1.0)


def reciprocal(a) -> Var:
    a = _as_var(a)
    v = 1.0 / a.value
    return op(v, [(a, lambda g: -g * v * v)])


def exp(a) -> Var:
    a = _as_var(a)
    v = np.exp(a.value)
    return op(v, [(a, lambda g: g * v)])


def log(a) -> Var:
    a = _as_var(a)
    return op(np.log(a.value), [(a, lambda g: g / a.value)])


def log1p(a) -> Var:
    a = _as_var(a)
    return op(np.log1p(a.value), [(a, lambda g: g / (1.0 + a.value))])


def power_const(a, p: float) -> Var:
    a = _as_var(a)
    if p == 0.0:
        return Var(np.ones_like(a.value))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = p * a.value ** (p - 1.0)
    # unbounded slope only occurs at values pinned by an upstream clip;
    # treat those points as flat
    coef = np.where(np.isfinite(coef), coef, 0.0)
    return op(a.value**p, [(a, lambda g: g * coef)])


def maximum_const(a, c) -> Var:
    """max(a, c) elementwise; at ties the gradient goes to the constant."""
    a = _as_var(a)
    keep = a.value > c
    return op(np.maximum(a.value, c), [(a, lambda g: g * keep)])


def clip(a, lo: float, hi: float) -> Var:
    a = _as_var(a)
    inside = (a.value > lo) & (a.value < hi)
    return op(np.clip(a.value, lo, hi), [(a, lambda g: g * inside)])


def masked_fill(a, mask: np.ndarray, fill) -> Var:
    """where(mask, fill, a): masked entries become constants (no gradient)."""
    a = _as_var(a)
    out = np.where(mask, fill, a.value)
    return op(out, [(a, lambda g: g * ~mask)])


# ------------------------------------------------------------- linear algebra


def matmul(a, b) -> Var:
    a, b = _as_var(a), _as_var(b)
    return op(a.value @ b.value, [
        (a, lambda g: g @ b.value.T),
        (b, lambda g: a.value.T @ g),
    ])


def matmul_const(a, c: np.ndarray) -> Var:
    """a @ c with c a constant (stop-gradient) matrix."""
    a = _as_var(a)
    return op(a.value @ c, [(a, lambda g: g @ c.T)])


def transpose(a) -> Var:
    a = _as_var(a)
    return op(a.value.T, [(a, lambda g: g.T)])


def rownorm(a) -> Var:
    """Unit-normalize each row."""
    a = _as_var(a)
    r = np.linalg.norm(a.value, axis=1, keepdims=True)
    y = a.value / r

    def vjp(g):
        return (g - y * np.sum(g * y, axis=1, keepdims=True)) / r

    return op(y, [(a, vjp)])


def self_cosine(a) -> Var:
    """a @ a.T for unit-norm rows (both uses of `a` receive gradient)."""
    a = _as_var(a)
    return op(a.value @ a.value.T, [(a, lambda g: (g + g.T) @ a.value)])


def pairwise_euclidean(a) -> Var:
    """Euclidean distance matrix over rows; zero-distance pairs get zero grad."""
    a = _as_var(a)
    d = simcore.pairwise_euclidean(a.value)

    def vjp(g):
        w = np.zeros_like(d)
        np.divide(g + g.T, d, out=w, where=d > _SAFE_DIST)
        return w.sum(axis=1, keepdims=True) * a.value - w @ a.value

    return op(d, [(a, vjp)])


# ------------------------------------------------------------- distributions


def softmax_rows(a, temperature: float = 1.0) -> Var:
    a = _as_var(a)
    p = simcore.row_softmax(a.value, 0.0, temperature)

    def vjp(g):
        return p * (g - np.sum(g * p, axis=-1, keepdims=True)) / temperature

    return op(p, [(a, vjp)])


def logsoftmax_rows(a, temperature: float = 1.0) -> Var:
    a = _as_var(a)
    z = a.value / temperature
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    p = np.exp(z - lse)

    def vjp(g):
        return (g - p * np.sum(g, axis=-1, keepdims=True)) / temperature

    return op(z - lse, [(a, vjp)])


# ---------------------------------------------------------------- reductions


def total_sum(a) -> Var:
    a = _as_var(a)
    return op(np.sum(a.value), [(a, lambda g: np.broadcast_to(g, a.value.shape).copy())])


def total_mean(a) -> Var:
    a = _as_var(a)
    n = a.value.size
    return op(np.mean(a.value), [(a, lambda g: np.broadcast_to(g / n, a.value.shape).copy())])


def sum_rows(a) -> Var:
    """Sum over axis 1 -> vector of row sums."""
    a = _as_var(a)
    return op(np.sum(a.value, axis=1), [(a, lambda g: np.broadcast_to(g[:, None], a.value.shape).copy())])


def masked_sum_rows(a, mask: np.ndarray) -> Var:
    """Row sums restricted to a constant boolean mask."""
    a = _as_var(a)
    return op(np.sum(a.value * mask, axis=1), [(a, lambda g: g[:, None] * mask)])


def diag(a) -> Var:
    a = _as_var(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.fill_diagonal(out, g)
        return out

    return op(np.diagonal(a.value).copy(), [(a, vjp)])


def take_pairs(a, rows: np.ndarray, cols: np.ndarray) -> Var:
    """Gather a[rows[k], cols[k]] -> vector."""
    a = _as_var(a)

    def vjp(g):
        out = np.zeros_like(a.value)
        np.add.at(out, (rows, cols), g)
        return out

    return op(a.value[rows, cols], [(a, vjp)])


def reshape(a, shape) -> Var:
    a = _as_var(a)
    old = a.value.shape
    return op(a.value.reshape(shape), [(a, lambda g: g.reshape(old))])
