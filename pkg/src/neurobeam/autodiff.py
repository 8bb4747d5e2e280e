"""Reverse-mode automatic differentiation over real numpy arrays.

The engine is define-by-run: each operation returns a ``Tensor`` that
records its parent tensors and a closure mapping the output gradient to
parent gradients.  ``backward`` walks the graph once in reverse
topological order and accumulates into ``Tensor.grad``.

Complex quantities elsewhere in the package are carried as (real, imag)
pairs of ``Tensor``s, so the engine itself only ever sees real arrays.
Gradients accumulate across ``backward`` calls until explicitly cleared,
which makes a zero-then-rerun reproduce identical gradients.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    """A real n-d array with a gradient slot and a backward-graph record.

    ``needs_grad`` is False for constants (inputs that no parameter can
    influence); backward skips those subgraphs entirely.
    """

    __slots__ = ("data", "grad", "parents", "needs_grad", "_backward")

    def __init__(self, data, parents=(), backward=None, needs_grad=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = tuple(parents)
        if needs_grad is None:
            needs_grad = any(p.needs_grad for p in self.parents) if self.parents else True
        self.needs_grad = needs_grad
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return self.data.item()

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, needs_grad={self.needs_grad})"

    # Arithmetic sugar; scalars and arrays are wrapped as constants.
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


def constant(data, dtype=None):
    """Wrap an array as a non-differentiable leaf."""
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, needs_grad=False)


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float64
    return constant(np.asarray(x, dtype=dtype))


def _topo_order(root):
    """Children-before-parents ordering of the subgraph that needs grads."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.needs_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Populate ``grad`` for every tensor the scalar ``loss`` depends on.

    Interior (non-leaf) gradients are recomputed from scratch on every
    call; leaf gradients accumulate across calls until explicitly
    cleared, so zeroing the leaves and re-running reproduces identical
    gradients.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    if not loss.needs_grad:
        return
    order = _topo_order(loss)
    for node in order:
        if node.parents:
            node.grad = None
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (the adjoint of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Elementwise and shape operations
# ---------------------------------------------------------------------------

def add(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_data = a.data + b.data

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return Tensor(out_data, (a, b), backward_fn)


def sub(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_data = a.data - b.data

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(-g, b.shape))

    return Tensor(out_data, (a, b), backward_fn)


def mul(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_data = a.data * b.data

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, (a, b), backward_fn)


def div(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)
    out_data = a.data / b.data

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(_unbroadcast(g / b.data, a.shape))
        if b.needs_grad:
            b.accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return Tensor(out_data, (a, b), backward_fn)


def neg(a):
    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(-g)

    return Tensor(-a.data, (a,), backward_fn)


def sqrt(a):
    """Elementwise square root; the input must stay strictly positive."""
    out_data = np.sqrt(a.data)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g / (2.0 * out_data))

    return Tensor(out_data, (a,), backward_fn)


def log(a):
    out_data = np.log(a.data)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g / a.data)

    return Tensor(out_data, (a,), backward_fn)


def sigmoid(a):
    x = a.data
    out_data = np.empty_like(x)
    pos = x >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g * out_data * (1.0 - out_data))

    return Tensor(out_data, (a,), backward_fn)


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient is zero outside the interval."""
    out_data = np.clip(a.data, lo, hi)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g * inside)

    return Tensor(out_data, (a,), backward_fn)


def prelu(a, slope, axis):
    """x if x > 0 else slope * x, with a learnable slope along ``axis``."""
    bshape = [1] * a.ndim
    bshape[axis] = slope.data.shape[0]
    s = slope.data.reshape(bshape)
    pos = a.data > 0
    out_data = np.where(pos, a.data, s * a.data)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(np.where(pos, g, s * g))
        if slope.needs_grad:
            gs = np.where(pos, 0.0, g * a.data)
            reduce_axes = tuple(i for i in range(a.ndim) if i != axis)
            slope.accumulate(gs.sum(axis=reduce_axes))

    return Tensor(out_data, (a, slope), backward_fn)


def matmul(a, b):
    out_data = a.data @ b.data

    def backward_fn(g):
        if a.needs_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.needs_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b.accumulate(_unbroadcast(gb, b.shape))

    return Tensor(out_data, (a, b), backward_fn)


def reshape(a, shape):
    in_shape = a.data.shape
    out_data = a.data.reshape(shape)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g.reshape(in_shape))

    return Tensor(out_data, (a,), backward_fn)


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def backward_fn(g):
        if a.needs_grad:
            a.accumulate(g.transpose(inv))

    return Tensor(out_data, (a,), backward_fn)


def reduce_sum(a, axis=None, keepdims=False):
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if not a.needs_grad:
            return
        if axis is None:
            a.accumulate(np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        a.accumulate(np.broadcast_to(g, a.shape).copy())

    return Tensor(out_data, (a,), backward_fn)


def reduce_mean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod(
        [a.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))])
    s = reduce_sum(a, axis=axis, keepdims=keepdims)
    return mul(s, as_tensor(1.0 / float(count), like=a))


def concat(parts, axis):
    parts = list(parts)
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.needs_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p.accumulate(g[tuple(idx)])

    return Tensor(out_data, tuple(parts), backward_fn)


def narrow(a, axis, start, length):
    """Slice ``length`` entries from ``start`` along ``axis``."""
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out_data = a.data[idx].copy()

    def backward_fn(g):
        if a.needs_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            a.accumulate(full)

    return Tensor(out_data, (a,), backward_fn)


def square(a):
    return mul(a, a)
