"""Tensor with taped reverse-mode gradients, and the op set the model needs.

Design rules:
  * ops build fresh output arrays; inputs are never written to
  * every op that contributes gradient records a backward closure mapping the
    output gradient to per-parent gradients
  * gradient accumulation uses `old + new` (never `+=`), so aliased views
    coming out of backward closures are harmless
  * reductions use numpy's fixed internal order, so identical inputs produce
    bit-identical outputs
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from ..errors import ShapeError

_INV_SQRT2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT2PI = float(1.0 / np.sqrt(2.0 * np.pi))


class Tensor:
    """A numpy array plus the provenance needed for reverse-mode gradients."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = ()
        self._backward = None

    # -- introspection -------------------------------------------------------

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

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # -- autograd ------------------------------------------------------------

    def backward(self, retain_grads=False):
        """Backpropagate from a scalar; accumulates into leaf .grad fields.

        Non-leaf gradients are dropped as soon as they are consumed unless
        retain_grads is set (tests use that to inspect intermediates).
        """
        if self.data.size != 1:
            raise ShapeError(f"backward needs a scalar, got shape {self.data.shape}")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g
            if node._parents and not retain_grads:
                node.grad = None

    # -- operator sugar ------------------------------------------------------

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_scalar(self, exponent)

    def sum(self, axis=None, keepdims=False):
        return _reduce(self, axis, keepdims, is_mean=False)

    def mean(self, axis=None, keepdims=False):
        return _reduce(self, axis, keepdims, is_mean=True)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def swapaxes(self, a, b):
        axes = list(range(self.data.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))


def as_tensor(x):
    """Wrap a constant (array/scalar) as a non-grad Tensor; pass Tensors through."""
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(name, data):
    """A learnable leaf: owns its array, participates in grad accumulation."""
    arr = np.array(data)  # private copy; optimizers reassign, never alias
    return Tensor(arr, requires_grad=True, name=name)


def _node(data, parents, backward):
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g, shape):
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- arithmetic ---------------------------------------------------------------


def _is_scalar(x):
    # python scalars stay "weak" under NEP 50, preserving float32 graphs
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def add(a, b):
    if _is_scalar(b) or _is_scalar(a):
        t, s = (a, float(b)) if _is_scalar(b) else (b, float(a))
        t = as_tensor(t)
        return _node(t.data + s, (t,), lambda g: (g,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(data, (a, b), backward)


def sub(a, b):
    if _is_scalar(b):
        return add(a, -float(b))
    if _is_scalar(a):
        t = as_tensor(b)
        return _node(float(a) - t.data, (t,), lambda g: (-g,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(data, (a, b), backward)


def mul(a, b):
    if _is_scalar(b) or _is_scalar(a):
        t, s = (a, float(b)) if _is_scalar(b) else (b, float(a))
        t = as_tensor(t)
        return _node(t.data * s, (t,), lambda g: (g * s,))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _node(data, (a, b), backward)


def div(a, b):
    if _is_scalar(b):
        return mul(a, 1.0 / float(b))
    if _is_scalar(a):
        s = float(a)
        t = as_tensor(b)
        return _node(s / t.data, (t,), lambda g: (-g * s / (t.data * t.data),))
    a, b = as_tensor(a), as_tensor(b)
    data = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _node(data, (a, b), backward)


def pow_scalar(a, exponent):
    a = as_tensor(a)
    e = float(exponent)
    data = a.data**e

    def backward(g):
        return (g * e * a.data ** (e - 1.0),)

    return _node(data, (a,), backward)


def exp(a):
    a = as_tensor(a)
    data = np.exp(a.data)

    def backward(g):
        return (g * data,)

    return _node(data, (a,), backward)


def log(a):
    a = as_tensor(a)
    data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return _node(data, (a,), backward)


def sqrt(a):
    a = as_tensor(a)
    data = np.sqrt(a.data)

    def backward(g):
        return (g * (0.5 / data),)

    return _node(data, (a,), backward)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.data.shape} @ {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul: {a.data.shape} @ {b.data.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _node(data, (a, b), backward)


def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return _node(data, (a,), backward)


def transpose(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    data = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return _node(data, (a,), backward)


def concat(tensors, axis):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        pieces = []
        for i in range(len(tensors)):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(g[tuple(index)])
        return tuple(pieces)

    return _node(data, tuple(tensors), backward)


def narrow(a, axis, start, length):
    """Contiguous slice along one axis (the building block of split)."""
    a = as_tensor(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    data = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(data, (a,), backward)


def split(a, sizes, axis):
    a = as_tensor(a)
    if sum(sizes) != a.data.shape[axis]:
        raise ShapeError(f"split sizes {sizes} do not cover axis {axis} of {a.data.shape}")
    out, start = [], 0
    for size in sizes:
        out.append(narrow(a, axis, start, size))
        start += size
    return out


# -- reductions ---------------------------------------------------------------


def _reduce(a, axis, keepdims, is_mean):
    a = as_tensor(a)
    if is_mean:
        data = a.data.mean(axis=axis, keepdims=keepdims)
    else:
        data = a.data.sum(axis=axis, keepdims=keepdims)
    in_shape = a.data.shape
    count = a.data.size / data.size if is_mean else 1.0

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(ax % len(in_shape) for ax in axes):
                gg = np.expand_dims(gg, ax)
        gg = np.broadcast_to(gg, in_shape)
        if is_mean:
            gg = gg / count
        return (gg,)

    return _node(data, (a,), backward)


# -- nonlinearities -----------------------------------------------------------


def softmax(a, axis=-1):
    """Softmax along one axis. Rows must contain at least one finite entry
    (masked attention keeps the diagonal unmasked)."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * data).sum(axis=axis, keepdims=True)
        return (data * (g - inner),)

    return _node(data, (a,), backward)


def layer_norm(a, axis=-1, eps=1e-8):
    """Normalize to zero mean / unit variance along `axis`; no learned affine."""
    a = as_tensor(a)
    mu = a.data.mean(axis=axis, keepdims=True)
    centered = a.data - mu
    var = (centered * centered).mean(axis=axis, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward(g):
        gm = g.mean(axis=axis, keepdims=True)
        gx = (g * xhat).mean(axis=axis, keepdims=True)
        return ((g - gm - xhat * gx) * inv_std,)

    return _node(xhat, (a,), backward)


def gelu(a):
    """Exact (erf) GELU."""
    a = as_tensor(a)
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    data = x * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        return (g * (cdf + x * pdf),)

    return _node(data, (a,), backward)


def relu(a):
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0.0),)

    return _node(data, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    x = a.data
    data = np.empty_like(x)
    pos = x >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    data[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * data * (1.0 - data),)

    return _node(data, (a,), backward)


def elu_plus_one(a):
    """ELU(x) + 1: smooth, positive, used as the attention kernel feature map."""
    a = as_tensor(a)
    x = a.data
    neg = np.exp(np.minimum(x, 0.0))
    data = np.where(x > 0.0, x + 1.0, neg)

    def backward(g):
        return (g * np.where(x > 0.0, 1.0, neg),)

    return _node(data, (a,), backward)


def softplus(a):
    """log(1 + exp(x)), computed stably."""
    a = as_tensor(a)
    x = a.data
    data = np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)

    def backward(g):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _node(data, (a,), backward)


# -- gather / mask ------------------------------------------------------------


def embedding_lookup(table, indices):
    """Rows of `table` at integer `indices`; gradient scatter-adds by row."""
    table = as_tensor(table)
    idx = np.asarray(indices)
    if not np.issubdtype(idx.dtype, np.integer):
        raise ShapeError(f"embedding indices must be integers, got {idx.dtype}")
    data = table.data[idx]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _node(data, (table,), backward)


def masked_fill(a, mask, value):
    """Replace entries where `mask` is True by `value` (e.g. -inf before softmax).

    Masked positions receive exactly zero gradient.
    """
    a = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    data = np.where(mask, a.data.dtype.type(value), a.data)

    def backward(g):
        return (_unbroadcast(np.where(mask, 0.0, g), a.data.shape),)

    return _node(data, (a,), backward)
