"""Reverse-mode automatic differentiation over numpy arrays.

A Tape records every primitive applied to values derived from its leaves.
backward() walks the recorded nodes once in reverse order and accumulates
vector-Jacobian products into .adjoint. Operands that are plain numpy
arrays (or Vars from no tape) are constants: they are never recorded and
receive no gradient, so mixed graphs skip constant subgraphs entirely.

Tapes are append-only and single-use: build a graph, call backward once,
read .grad off the leaves, then drop the tape.
"""

from __future__ import annotations

import numpy as np


class Tape:
    """Ordered record of operations, parents always preceding children."""

    def __init__(self):
        self.nodes = []

    def leaf(self, value, dtype=None):
        """Register an input array that should receive a gradient."""
        arr = np.asarray(value, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            raise TypeError(f"leaf must be a float array, got {arr.dtype}")
        node = Var(arr, tape=self)
        self.nodes.append(node)
        return node


class Var:
    """Array value tracked on a tape.

    value   : numpy array (or scalar array) holding the forward result
    tape    : owning Tape, or None for constants
    parents : recorded Vars this node depends on
    vjps    : per-parent callables mapping output adjoint -> parent adjoint
    adjoint : filled in by backward(); None until then
    """

    __slots__ = ("value", "tape", "parents", "vjps", "adjoint")

    def __init__(self, value, tape=None, parents=(), vjps=()):
        self.value = value
        self.tape = tape
        self.parents = parents
        self.vjps = vjps
        self.adjoint = None

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def grad(self):
        """Accumulated adjoint, or zeros if backward never reached this node."""
        if self.adjoint is None:
            return np.zeros_like(self.value)
        return np.asarray(self.adjoint)

    def detach(self):
        """Current value as a constant, cutting the graph."""
        return np.asarray(self.value)

    def __repr__(self):
        tag = "taped" if self.tape is not None else "const"
        return f"Var({tag}, shape={np.shape(self.value)}, dtype={self.value.dtype})"

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, n):
        return power(self, n)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- method aliases for common chains ---------------------------------

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    def abs(self):
        return absolute(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def value_of(x):
    """Underlying numpy array of a Var or array-like constant."""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x)


def _raw(x):
    """Operand value, leaving python scalars untouched.

    Keeping scalars weakly typed stops them from promoting float32
    operands to float64 under NEP 50 rules.
    """
    return x.value if isinstance(x, Var) else x


def _record(value, pairs):
    """Build the output Var; record it iff some operand is on a tape.

    pairs is a sequence of (operand, vjp) for gradient-capable operands.
    """
    value = np.asarray(value)
    tape = None
    parents = []
    vjps = []
    for operand, vjp in pairs:
        if isinstance(operand, Var) and operand.tape is not None:
            if tape is None:
                tape = operand.tape
            elif tape is not operand.tape:
                raise ValueError("operands recorded on different tapes")
            parents.append(operand)
            vjps.append(vjp)
    out = Var(value, tape, tuple(parents), tuple(vjps))
    if tape is not None:
        tape.nodes.append(out)
    return out


def _unbroadcast(g, shape):
    """Sum an adjoint down to the shape numpy broadcast it up from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def backward(loss):
    """Accumulate d(loss)/d(node) into .adjoint for every reachable node."""
    if not isinstance(loss, Var) or loss.tape is None:
        raise ValueError("backward needs a Var recorded on a tape")
    if np.shape(loss.value) != ():
        raise ValueError(f"loss must be scalar, got shape {np.shape(loss.value)}")
    loss.adjoint = np.asarray(1.0, dtype=loss.value.dtype)
    for node in reversed(loss.tape.nodes):
        g = node.adjoint
        if g is None:  # not reachable from the loss
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = vjp(g)
            if parent.adjoint is None:
                parent.adjoint = contrib
            else:
                parent.adjoint = parent.adjoint + contrib


# -- primitives -----------------------------------------------------------


def add(a, b):
    av, bv = _raw(a), _raw(b)
    out = av + bv
    return _record(out, (
        (a, lambda g: _unbroadcast(g, np.shape(av))),
        (b, lambda g: _unbroadcast(g, np.shape(bv))),
    ))


def sub(a, b):
    av, bv = _raw(a), _raw(b)
    out = av - bv
    return _record(out, (
        (a, lambda g: _unbroadcast(g, np.shape(av))),
        (b, lambda g: _unbroadcast(-g, np.shape(bv))),
    ))


def mul(a, b):
    av, bv = _raw(a), _raw(b)
    out = av * bv
    return _record(out, (
        (a, lambda g: _unbroadcast(g * bv, np.shape(av))),
        (b, lambda g: _unbroadcast(g * av, np.shape(bv))),
    ))


def div(a, b):
    av, bv = _raw(a), _raw(b)
    out = av / bv
    return _record(out, (
        (a, lambda g: _unbroadcast(g / bv, np.shape(av))),
        (b, lambda g: _unbroadcast(-g * av / (bv * bv), np.shape(bv))),
    ))


def power(a, n):
    """Elementwise a**n for a constant exponent n."""
    if isinstance(n, Var):
        raise TypeError("exponent must be a constant")
    av = value_of(a)
    out = av ** n
    return _record(out, (
        (a, lambda g: g * n * av ** (n - 1)),
    ))


def matmul(a, b):
    av, bv = value_of(a), value_of(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {av.ndim}-d and {bv.ndim}-d")
    out = av @ bv
    return _record(out, (
        (a, lambda g: g @ bv.T),
        (b, lambda g: av.T @ g),
    ))


def exp(a):
    out = np.exp(value_of(a))
    return _record(out, ((a, lambda g: g * out),))


def log(a):
    av = value_of(a)
    out = np.log(av)
    return _record(out, ((a, lambda g: g / av),))


def absolute(a):
    av = value_of(a)
    # subgradient 0 at the kink
    sign = np.sign(av)
    return _record(np.abs(av), ((a, lambda g: g * sign),))


def relu(a):
    av = value_of(a)
    mask = av > 0  # subgradient 0 at the kink
    return _record(av * mask, ((a, lambda g: g * mask),))


def sigmoid(a):
    av = value_of(a)
    with np.errstate(over="ignore"):  # exp overflow saturates to the correct limit
        out = 1.0 / (1.0 + np.exp(-av))
    return _record(out, ((a, lambda g: g * out * (1.0 - out)),))


def softplus(a):
    av = value_of(a)
    out = np.logaddexp(0.0, av).astype(av.dtype, copy=False)
    with np.errstate(over="ignore"):
        s = 1.0 / (1.0 + np.exp(-av))
    return _record(out, ((a, lambda g: g * s),))


def sum_(a, axis=None, keepdims=False):
    av = value_of(a)
    out = av.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, av.shape)

    return _record(out, ((a, vjp),))


def mean(a, axis=None, keepdims=False):
    av = value_of(a)
    count = av.size if axis is None else np.prod([av.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def maximum(a, b):
    """Elementwise max; ties send the gradient to the first operand."""
    av, bv = _raw(a), _raw(b)
    take_a = av >= bv
    out = np.where(take_a, av, bv)
    return _record(out, (
        (a, lambda g: _unbroadcast(g * take_a, np.shape(av))),
        (b, lambda g: _unbroadcast(g * ~take_a, np.shape(bv))),
    ))


def reshape(a, shape):
    av = value_of(a)
    out = av.reshape(shape)
    return _record(out, ((a, lambda g: g.reshape(av.shape)),))


def getitem(a, idx):
    av = value_of(a)
    out = av[idx]

    def vjp(g):
        acc = np.zeros_like(av)
        np.add.at(acc, idx, g)
        return acc

    return _record(out, ((a, vjp),))


def concat(parts, axis=0):
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def make_vjp(k):
        sl = [slice(None)] * out.ndim
        sl[axis] = slice(offsets[k], offsets[k + 1])
        sl = tuple(sl)
        return lambda g: g[sl]

    return _record(out, tuple((p, make_vjp(k)) for k, p in enumerate(parts)))


def stack(parts, axis=0):
    vals = [value_of(p) for p in parts]
    out = np.stack(vals, axis=axis)

    def make_vjp(k):
        return lambda g: np.take(g, k, axis=axis)

    return _record(out, tuple((p, make_vjp(k)) for k, p in enumerate(parts)))


def exclusive_cumsum(a, axis=-1):
    """Cumulative sum shifted by one: out[..., k] = sum of a[..., :k].

    out[..., 0] is exactly zero; the last input element never affects
    the output along that lane.
    """
    av = value_of(a)
    out = np.cumsum(av, axis=axis) - av

    def vjp(g):
        # adjoint of element k is the sum of downstream adjoints j > k
        rev = np.flip(g, axis=axis)
        tail = np.flip(np.cumsum(rev, axis=axis), axis=axis)
        return tail - g

    return _record(out, ((a, vjp),))
