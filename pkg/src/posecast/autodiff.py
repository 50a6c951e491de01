"""Define-by-run reverse-mode automatic differentiation over numpy arrays.

Every op records its parents and a closure that pushes the output adjoint
back to them.  Graphs are rebuilt on each forward pass, which is what the
recurrent encoders need when they unroll over a window.

Nodes that do not (transitively) depend on a ``requires_grad`` leaf are
treated as constants and record nothing, so inference runs without graph
overhead.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "ShapeError", "as_tensor", "backward", "grad_of",
    "add", "sub", "mul", "div", "neg", "matmul", "power",
    "sigmoid", "tanh", "relu", "exp", "log", "sqrt", "sin", "cos",
    "softmax", "concat", "stack", "index", "sum", "mean", "sqnorm",
    "reshape", "swapaxes", "cross", "expand_dims",
]

DTYPE = np.float64


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "op", "parents", "_backward", "requires_grad", "name")
    # make numpy defer to our reflected operators (array + Tensor -> Tensor)
    __array_ufunc__ = None

    def __init__(self, value, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.grad = None
        self.op = "leaf"
        self.parents = ()
        self._backward = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        tag = self.name or self.op
        return f"Tensor({tag}, shape={self.value.shape})"

    def zero_grad(self):
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __pow__(self, k):
        return power(self, k)

    def __getitem__(self, key):
        return index(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, op, backward_fn):
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.op = op
    out.name = None
    live = tuple(p for p in parents if p.requires_grad)
    out.requires_grad = bool(live)
    if live:
        out.parents = parents
        out._backward = backward_fn
    else:
        out.parents = ()
        out._backward = None
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True).reshape(t.value.shape)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_check(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))
    return _node(a.value + b.value, (a, b), "add", bw)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)

    def bw(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))
    return _node(a.value - b.value, (a, b), "sub", bw)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.value, b.shape))
    return _node(a.value * b.value, (a, b), "mul", bw)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("div", a, b)
    out_value = a.value / b.value

    def bw(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.value, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * out_value / b.value, b.shape))
    return _node(out_value, (a, b), "div", bw)


def neg(a):
    a = as_tensor(a)
    return _node(-a.value, (a,), "neg", lambda g: _accum(a, -g))


def power(a, k):
    a = as_tensor(a)
    k = float(k)

    def bw(g):
        _accum(a, g * k * a.value ** (k - 1.0))
    return _node(a.value ** k, (a,), f"pow{k:g}", bw)


def sigmoid(a):
    a = as_tensor(a)
    # split by sign to keep exp from overflowing
    x = a.value
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _node(s, (a,), "sigmoid", lambda g: _accum(a, g * s * (1.0 - s)))


def tanh(a):
    a = as_tensor(a)
    y = np.tanh(a.value)
    return _node(y, (a,), "tanh", lambda g: _accum(a, g * (1.0 - y * y)))


def relu(a):
    a = as_tensor(a)
    mask = a.value > 0
    return _node(a.value * mask, (a,), "relu", lambda g: _accum(a, g * mask))


def exp(a):
    a = as_tensor(a)
    y = np.exp(a.value)
    return _node(y, (a,), "exp", lambda g: _accum(a, g * y))


def log(a):
    a = as_tensor(a)
    return _node(np.log(a.value), (a,), "log", lambda g: _accum(a, g / a.value))


def sqrt(a):
    a = as_tensor(a)
    y = np.sqrt(a.value)
    return _node(y, (a,), "sqrt", lambda g: _accum(a, 0.5 * g / y))


def sin(a):
    a = as_tensor(a)
    return _node(np.sin(a.value), (a,), "sin", lambda g: _accum(a, g * np.cos(a.value)))


def cos(a):
    a = as_tensor(a)
    return _node(np.cos(a.value), (a,), "cos", lambda g: _accum(a, -g * np.sin(a.value)))


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        _accum(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return _node(y, (a,), "softmax", bw)


# ------------------------------------------------------------ linear algebra

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[-2] if b.ndim >= 2 else b.shape[0]
    if ka != kb:
        raise ShapeError(f"matmul: inner dimensions differ, shapes {a.shape} and {b.shape}")
    out_value = np.matmul(a.value, b.value)

    def bw(g):
        av, bv = a.value, b.value
        if av.ndim == 1 or bv.ndim == 1:
            # vector cases are rare here; promote and reuse the matrix rule
            a2 = av[None, :] if av.ndim == 1 else av
            b2 = bv[:, None] if bv.ndim == 1 else bv
            g2 = g
            if av.ndim == 1:
                g2 = np.expand_dims(g2, -2)
            if bv.ndim == 1:
                g2 = np.expand_dims(g2, -1)
            if a.requires_grad:
                ga = np.matmul(g2, np.swapaxes(b2, -1, -2))
                ga = _unbroadcast(ga, a2.shape)
                _accum(a, ga.reshape(av.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a2, -1, -2), g2)
                gb = _unbroadcast(gb, b2.shape)
                _accum(b, gb.reshape(bv.shape))
            return
        if a.requires_grad:
            _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(bv, -1, -2)), av.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g), bv.shape))
    return _node(out_value, (a, b), "matmul", bw)


def cross(a, b):
    """Cross product along the last axis (length 3)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1:] != (3,) or b.shape[-1:] != (3,):
        raise ShapeError(f"cross: last axis must be 3, shapes {a.shape} and {b.shape}")
    _broadcast_check("cross", a, b)

    def bw(g):
        # d(a x b) = da x b + a x db;  adjoints: ga = b x g, gb = g x a
        if a.requires_grad:
            _accum(a, _unbroadcast(np.cross(b.value, g), a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(np.cross(g, a.value), b.shape))
    return _node(np.cross(a.value, b.value), (a, b), "cross", bw)


# --------------------------------------------------------- structural ops

def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accum(t, piece)
    return _node(value, tuple(tensors), "concat", bw)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        value = np.stack([t.value for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"stack: incompatible shapes {shapes}") from None

    def bw(g):
        for i, t in enumerate(tensors):
            _accum(t, np.take(g, i, axis=axis))
    return _node(value, tuple(tensors), "stack", bw)


def index(a, key):
    """Basic or advanced indexing; the adjoint scatter-adds."""
    a = as_tensor(a)
    value = a.value[key]
    if not isinstance(value, np.ndarray):
        value = np.asarray(value, dtype=DTYPE)

    fancy = _is_fancy(key)

    def bw(g):
        full = np.zeros_like(a.value)
        if fancy:
            np.add.at(full, key, g)
        else:
            full[key] += g
        _accum(a, full)
    return _node(value, (a,), "index", bw)


def _is_fancy(key):
    parts = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in parts)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        value = a.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from None
    return _node(value, (a,), "reshape", lambda g: _accum(a, g.reshape(a.shape)))


def swapaxes(a, ax1=-1, ax2=-2):
    a = as_tensor(a)
    return _node(np.swapaxes(a.value, ax1, ax2), (a,), "swapaxes",
                 lambda g: _accum(a, np.swapaxes(g, ax1, ax2)))


def expand_dims(a, axis):
    a = as_tensor(a)
    return _node(np.expand_dims(a.value, axis), (a,), "expand_dims",
                 lambda g: _accum(a, g.reshape(a.shape)))


# --------------------------------------------------------------- reductions

def _restore(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape)
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    a = as_tensor(a)
    value = np.asarray(a.value.sum(axis=axis, keepdims=keepdims), dtype=DTYPE)
    return _node(value, (a,), "sum", lambda g: _accum(a, _restore(g, a.shape, axis, keepdims)))


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    value = np.asarray(a.value.mean(axis=axis, keepdims=keepdims), dtype=DTYPE)
    n = a.value.size / max(value.size, 1)

    def bw(g):
        _accum(a, _restore(g, a.shape, axis, keepdims) / n)
    return _node(value, (a,), "mean", bw)


def sqnorm(a, axis=None, keepdims=False):
    """Sum of squares, over everything or along ``axis``."""
    a = as_tensor(a)
    value = np.asarray((a.value * a.value).sum(axis=axis, keepdims=keepdims), dtype=DTYPE)

    def bw(g):
        _accum(a, 2.0 * a.value * _restore(g, a.shape, axis, keepdims))
    return _node(value, (a,), "sqnorm", bw)


# ----------------------------------------------------------------- backward

def _topo_order(root):
    order, seen = [], set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(root):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every reachable leaf.

    Leaf gradients accumulate across calls; clear them with ``zero_grad``.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    order = _topo_order(root)
    for node in order:
        if node._backward is not None:
            node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    for node in order:
        if node.grad is None:
            node.grad = np.zeros_like(node.value)


def grad_of(fn, *arrays):
    """Gradients of scalar ``fn(*tensors)`` w.r.t. each input array."""
    leaves = [Tensor(np.array(x, dtype=DTYPE), requires_grad=True) for x in arrays]
    out = fn(*leaves)
    backward(out)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value) for leaf in leaves]
