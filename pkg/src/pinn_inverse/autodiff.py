"""Array-valued reverse-mode automatic differentiation.

A :class:`Var` wraps a float64 ndarray and records the operations applied to
it.  Calling :meth:`Var.backward` on a scalar result propagates adjoints to
every leaf created with ``requires_grad=True``.

The module-level functions (:func:`tanh`, :func:`einsum`, ...) dispatch on
their arguments: with plain ndarrays they return plain ndarrays and build no
graph, so the same numerical code serves both evaluation and training.
"""

import numpy as np

__all__ = [
    "Var",
    "asvar",
    "value_of",
    "tanh",
    "exp",
    "log",
    "softplus",
    "sigmoid",
    "einsum",
    "linear",
    "sum",
    "mean",
    "square",
    "reshape",
]


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Var:
    """Node of the computation graph.

    Parameters
    ----------
    value : array_like
        Stored as a float64 ndarray.
    requires_grad : bool
        Mark as a leaf whose adjoint is wanted.
    """

    __array_priority__ = 1000
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, _parents=(), _backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    def __repr__(self):
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __len__(self):
        return len(self.value)

    # -- graph traversal -------------------------------------------------

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if seed is None:
            if self.value.size != 1:
                raise ValueError("backward() without seed needs a scalar output")
            seed = np.ones_like(self.value)
        order = []
        seen = set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        adj = {id(self): np.asarray(seed, dtype=np.float64)}
        for node in reversed(order):
            g = adj.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adj:
                    adj[key] = adj[key] + pg
                else:
                    adj[key] = pg

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = asvar(other)
        a, b = self, other

        def back(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Var(a.value + b.value, _parents=(a, b), _backward=back)

    __radd__ = __add__

    def __sub__(self, other):
        other = asvar(other)
        a, b = self, other

        def back(g):
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

        return Var(a.value - b.value, _parents=(a, b), _backward=back)

    def __rsub__(self, other):
        return asvar(other) - self

    def __mul__(self, other):
        other = asvar(other)
        a, b = self, other

        def back(g):
            return (
                _unbroadcast(g * b.value, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.value, b.shape) if b.requires_grad else None,
            )

        return Var(a.value * b.value, _parents=(a, b), _backward=back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = asvar(other)
        a, b = self, other
        out_value = a.value / b.value

        def back(g):
            return (
                _unbroadcast(g / b.value, a.shape) if a.requires_grad else None,
                _unbroadcast(-g * out_value / b.value, b.shape) if b.requires_grad else None,
            )

        return Var(out_value, _parents=(a, b), _backward=back)

    def __rtruediv__(self, other):
        return asvar(other) / self

    def __neg__(self):
        return Var(-self.value, _parents=(self,), _backward=lambda g: (-g,))

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            raise TypeError("only constant exponents are supported")
        a = self

        def back(g):
            return (g * exponent * a.value ** (exponent - 1),)

        return Var(a.value**exponent, _parents=(a,), _backward=back)

    def __matmul__(self, other):
        return einsum("...ij,...jk->...ik", self, other)

    def __rmatmul__(self, other):
        return einsum("...ij,...jk->...ik", other, self)

    def __getitem__(self, index):
        a = self
        shape = a.shape

        basic = _is_basic_index(index)

        def back(g):
            out = np.zeros(shape)
            if basic:
                out[index] = g
            else:
                np.add.at(out, index, g)
            return (out,)

        return Var(a.value[index], _parents=(a,), _backward=back)

    @property
    def T(self):
        a = self
        return Var(a.value.T, _parents=(a,), _backward=lambda g: (g.T,))

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def _is_basic_index(index):
    items = index if isinstance(index, tuple) else (index,)
    return all(
        i is None or i is Ellipsis or isinstance(i, (int, np.integer, slice)) for i in items
    )


def asvar(x):
    """Wrap ``x`` as a constant :class:`Var` unless it already is one."""
    return x if isinstance(x, Var) else Var(x)


def value_of(x):
    """Underlying ndarray of a Var, or ``x`` itself."""
    return x.value if isinstance(x, Var) else x


def _unary(x, fn, dfn_from):
    """Elementwise op; ``dfn_from(x_value, out_value)`` gives the local slope."""
    if not isinstance(x, Var):
        return fn(x)
    out = fn(x.value)

    def back(g):
        return (g * dfn_from(x.value, out),)

    return Var(out, _parents=(x,), _backward=back)


def tanh(x):
    return _unary(x, np.tanh, lambda _, t: 1.0 - t * t)


def exp(x):
    return _unary(x, np.exp, lambda _, e: e)


def log(x):
    return _unary(x, np.log, lambda v, _: 1.0 / v)


def sigmoid(x):
    def fn(v):
        return 0.5 * (1.0 + np.tanh(0.5 * v))

    return _unary(x, fn, lambda _, s: s * (1.0 - s))


def softplus(x):
    def fn(v):
        return np.logaddexp(0.0, v)

    return _unary(x, fn, lambda v, _: 0.5 * (1.0 + np.tanh(0.5 * v)))


def square(x):
    return x * x


def sum(x, axis=None, keepdims=False):
    if not isinstance(x, Var):
        return np.sum(x, axis=axis, keepdims=keepdims)
    shape = x.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Var(np.sum(x.value, axis=axis, keepdims=keepdims), _parents=(x,), _backward=back)


def mean(x, axis=None):
    n = value_of(x).size if axis is None else value_of(x).shape[axis]
    return sum(x, axis=axis) * (1.0 / n)


def reshape(x, shape):
    if not isinstance(x, Var):
        return np.reshape(x, shape)
    old = x.shape
    return Var(x.value.reshape(shape), _parents=(x,), _backward=lambda g: (g.reshape(old),))


def _parse_einsum(spec, a_ndim, b_ndim):
    """Split a two-operand spec, replacing '...' by explicit letters."""
    inputs, output = spec.replace(" ", "").split("->")
    lhs, rhs = inputs.split(",")
    if "..." not in spec:
        return lhs, rhs, output
    free = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in spec]
    n_a = a_ndim - len(lhs.replace("...", ""))
    n_b = b_ndim - len(rhs.replace("...", ""))
    n_out = max(n_a, n_b)
    letters = "".join(free[:n_out])
    lhs = lhs.replace("...", letters[n_out - n_a :])
    rhs = rhs.replace("...", letters[n_out - n_b :])
    output = output.replace("...", letters)
    return lhs, rhs, output


def einsum(spec, a, b):
    """Two-operand ``np.einsum`` with reverse-mode support.

    Every index of each operand must appear in the other operand or in the
    output (no implicit summation over a single operand's private index).
    """
    if not isinstance(a, Var) and not isinstance(b, Var):
        return np.einsum(spec, a, b)
    a, b = asvar(a), asvar(b)
    lhs, rhs, out = _parse_einsum(spec, a.ndim, b.ndim)
    value = np.einsum(f"{lhs},{rhs}->{out}", a.value, b.value)

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = np.einsum(f"{out},{rhs}->{lhs}", g, b.value)
            if ga.shape != a.shape:
                ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.einsum(f"{out},{lhs}->{rhs}", g, a.value)
            if gb.shape != b.shape:
                gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return Var(value, _parents=(a, b), _backward=back)


def linear(x, W):
    """``x @ W.T`` over the last axis of ``x`` (any leading shape)."""
    if not isinstance(x, Var) and not isinstance(W, Var):
        return x @ W.T
    x, W = asvar(x), asvar(W)
    lead = x.shape[:-1]
    xv2 = x.value.reshape(-1, x.shape[-1])
    out = (xv2 @ W.value.T).reshape(lead + (W.shape[0],))

    def back(g):
        g2 = g.reshape(-1, W.shape[0])
        gx = (g2 @ W.value).reshape(x.shape) if x.requires_grad else None
        gW = g2.T @ xv2 if W.requires_grad else None
        return gx, gW

    return Var(out, _parents=(x, W), _backward=back)
