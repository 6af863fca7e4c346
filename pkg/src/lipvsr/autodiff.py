"""Minimal float64 reverse-mode autodiff on numpy arrays.

Every op records a closure that maps the output gradient to parent
gradients; `backward` replays them in reverse topological order. Results that
depend on no gradient-requiring input carry no tape, so inference-time graphs
cost nothing extra.
"""

from __future__ import annotations

import contextlib

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable taping inside the block; results become constants."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def _accumulate(self, grad: np.ndarray):
        grad = _unbroadcast(np.asarray(grad, dtype=np.float64), self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    # arithmetic

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("divide by a plain scalar, not a Tensor")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=needs, parents=tuple(p for p in parents if p.requires_grad), backward=backward if needs else None)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(out_data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(out_data, (a, b), bw)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            bt = np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(g @ bt, a.data.shape))
        if b.requires_grad:
            at = np.swapaxes(a.data, -1, -2)
            b._accumulate(_unbroadcast(at @ g, b.data.shape))

    return _make(out_data, (a, b), bw)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    out_data = a.data.reshape(shape)

    def bw(g):
        a._accumulate(g.reshape(old))

    return _make(out_data, (a,), bw)


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def bw(g):
        a._accumulate(g.transpose(inv))

    return _make(out_data, (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(out_data, tuple(ts), bw)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            ax = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, ax)
        a._accumulate(np.broadcast_to(g, a.data.shape))

    return _make(out_data, (a,), bw)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluate exp only on non-positive arguments so it never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _stable_sigmoid(a.data)

    def bw(g):
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), bw)


def swish(a) -> Tensor:
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = _stable_sigmoid(a.data)
    y = a.data * s

    def bw(g):
        a._accumulate(g * (s + a.data * s * (1.0 - s)))

    return _make(y, (a,), bw)


def glu(a, axis: int = -1) -> Tensor:
    """Split in halves along axis; first half gated by sigmoid of second."""
    a = as_tensor(a)
    n = a.data.shape[axis]
    if n % 2 != 0:
        raise ValueError(f"glu axis size {n} is odd")
    half = n // 2
    idx_a = [slice(None)] * a.data.ndim
    idx_b = [slice(None)] * a.data.ndim
    idx_a[axis] = slice(0, half)
    idx_b[axis] = slice(half, n)
    idx_a, idx_b = tuple(idx_a), tuple(idx_b)
    xa = a.data[idx_a]
    xb = a.data[idx_b]
    s = _stable_sigmoid(xb)
    y = xa * s

    def bw(g):
        full = np.zeros_like(a.data)
        full[idx_a] = g * s
        full[idx_b] = g * xa * s * (1.0 - s)
        a._accumulate(full)

    return _make(y, (a,), bw)


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        a._accumulate(y * (g - dot))

    return _make(y, (a,), bw)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse
    sm = np.exp(y)

    def bw(g):
        a._accumulate(g - sm * g.sum(axis=axis, keepdims=True))

    return _make(y, (a,), bw)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    a, gamma, beta = as_tensor(a), as_tensor(gamma), as_tensor(beta)
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc**2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gamma.data + beta.data
    n = a.data.shape[-1]

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if beta.requires_grad:
            beta._accumulate(g.reshape(-1, n).sum(axis=0))
        if a.requires_grad:
            gx = g * gamma.data
            t1 = gx.mean(axis=-1, keepdims=True)
            t2 = (gx * xhat).mean(axis=-1, keepdims=True)
            a._accumulate(inv * (gx - t1 - xhat * t2))

    return _make(y, (a, gamma, beta), bw)


def embedding(table, ids) -> Tensor:
    """Row gather: out[..., :] = table[ids[...], :]."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out_data = table.data[ids]

    def bw(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[-1]))
        table._accumulate(full)

    return _make(out_data, (table,), bw)


def gather_last(a, ids) -> Tensor:
    """Pick one entry along the last axis per leading index: out[i...] = a[i..., ids[i...]]."""
    a = as_tensor(a)
    ids = np.asarray(ids, dtype=np.int64)
    lead = np.indices(ids.shape)
    out_data = a.data[(*lead, ids)]

    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, (*lead, ids), g)
        a._accumulate(full)

    return _make(out_data, (a,), bw)


def custom(data, parents, backward) -> Tensor:
    """Escape hatch for hand-written ops (convolutions, sequence losses)."""
    return _make(np.asarray(data, dtype=np.float64), tuple(as_tensor(p) for p in parents), backward)
