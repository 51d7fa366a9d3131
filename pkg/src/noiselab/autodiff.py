"""Minimal reverse-mode autodiff on numpy arrays.

A Var wraps a float64 array and remembers how it was computed; calling
backward() on a scalar Var accumulates gradients into every upstream
Var's .grad. The op set is exactly what the networks and rollouts need:
elementwise arithmetic with broadcasting, 2D matmul, tanh, concat,
sum/mean, and detach.

The helper functions (tanh, concat, vsum, vmean, detach) accept plain
ndarrays too and then just run the numpy op, so a forward pass written
against them produces bit-identical values with or without a graph.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    """Node in the computation graph: a value plus backward closures."""

    # Let ndarray <op> Var defer to the reflected Var methods.
    __array_ufunc__ = None

    __slots__ = ("value", "grad", "_parents", "_vjps")

    def __init__(self, value, parents=(), vjps=()):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._vjps = vjps

    @property
    def shape(self):
        return self.value.shape

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        o = asvar(other)
        v = self.value + o.value
        return Var(v, (self, o), (lambda g: _unbroadcast(g, self.value.shape),
                                  lambda g: _unbroadcast(g, o.value.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Var(-self.value, (self,), (lambda g: -g,))

    def __sub__(self, other):
        o = asvar(other)
        v = self.value - o.value
        return Var(v, (self, o), (lambda g: _unbroadcast(g, self.value.shape),
                                  lambda g: _unbroadcast(-g, o.value.shape)))

    def __rsub__(self, other):
        return asvar(other).__sub__(self)

    def __mul__(self, other):
        o = asvar(other)
        v = self.value * o.value
        return Var(v, (self, o), (lambda g: _unbroadcast(g * o.value, self.value.shape),
                                  lambda g: _unbroadcast(g * self.value, o.value.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise TypeError("division by a Var is not supported; multiply by a reciprocal")
        return self * (1.0 / other)

    def __matmul__(self, other):
        o = asvar(other)
        a, b = self.value, o.value
        if a.ndim != 2 or b.ndim != 2:
            raise ValueError(f"matmul supports 2D operands only, got {a.shape} @ {b.shape}")
        return Var(a @ b, (self, o), (lambda g: g @ b.T, lambda g: a.T @ g))

    def __rmatmul__(self, other):
        return asvar(other).__matmul__(self)

    # -- nonlinearities and reductions -------------------------------------

    def tanh(self):
        y = np.tanh(self.value)
        return Var(y, (self,), (lambda g: g * (1.0 - y * y),))

    def silu(self):
        sig = 1.0 / (1.0 + np.exp(-self.value))
        y = self.value * sig
        return Var(y, (self,), (lambda g: g * (sig * (1.0 + self.value * (1.0 - sig))),))

    def sum(self):
        shape = self.value.shape
        return Var(np.sum(self.value), (self,), (lambda g: np.broadcast_to(g, shape).copy(),))

    def mean(self):
        shape, n = self.value.shape, self.value.size
        return Var(np.mean(self.value), (self,), (lambda g: np.broadcast_to(g / n, shape).copy(),))

    def reshape(self, *shape):
        old = self.value.shape
        return Var(self.value.reshape(*shape), (self,), (lambda g: g.reshape(old),))

    # -- engine ------------------------------------------------------------

    def backward(self):
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar root")
        order = _topo_order(self)
        self.grad = np.ones_like(self.value)
        for node in order:
            g = node.grad
            if g is None:
                continue
            for parent, vjp in zip(node._parents, node._vjps):
                contrib = vjp(g)
                parent.grad = contrib if parent.grad is None else parent.grad + contrib

    def zero_grad(self):
        self.grad = None


def _topo_order(root: Var) -> list[Var]:
    """Vars in reverse topological order (root first)."""
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def asvar(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


# -- dual-mode helpers: run on Var (tracked) or ndarray (plain numpy) -------

def tanh(x):
    return x.tanh() if isinstance(x, Var) else np.tanh(x)


def silu(x):
    if isinstance(x, Var):
        return x.silu()
    return x * (1.0 / (1.0 + np.exp(-x)))


def concat(parts, axis: int = -1):
    if any(isinstance(p, Var) for p in parts):
        vs = [asvar(p) for p in parts]
        value = np.concatenate([v.value for v in vs], axis=axis)
        sizes = [v.value.shape[axis] for v in vs]
        offsets = np.cumsum([0] + sizes)

        def make_vjp(i):
            lo, hi = offsets[i], offsets[i + 1]

            def vjp(g):
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                return g[tuple(index)]

            return vjp

        return Var(value, tuple(vs), tuple(make_vjp(i) for i in range(len(vs))))
    return np.concatenate(parts, axis=axis)


def vsum(x):
    return x.sum() if isinstance(x, Var) else np.sum(x)


def vmean(x):
    return x.mean() if isinstance(x, Var) else np.mean(x)


def detach(x):
    """Cut the graph: same value, zero upstream gradient."""
    return Var(x.value) if isinstance(x, Var) else x


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Var) else x
