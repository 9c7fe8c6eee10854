"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Just enough machinery for a small transformer: broadcasting arithmetic,
batched matmul, reductions, elementwise transcendentals, gather, and
composite softmax / layernorm built from those primitives. Gradients are
exact; the finite-difference harness in the test suite is the contract.
"""

from __future__ import annotations

import contextlib
import math

import numpy as np

# Optional multiply-accumulate counter, enabled via count_macs(). Counts
# forward-pass matmul MACs only.
_MAC_COUNTER: list | None = None


@contextlib.contextmanager
def count_macs():
    """Context manager yielding a single-element list accumulating MACs."""
    global _MAC_COUNTER
    prev = _MAC_COUNTER
    _MAC_COUNTER = [0]
    try:
        yield _MAC_COUNTER
    finally:
        _MAC_COUNTER = prev


class Tensor:
    """A node in the computation graph wrapping an ndarray value."""

    __slots__ = ("value", "grad", "_parents", "_backward", "requires_grad", "name")

    def __init__(self, value, parents=(), backward=None, requires_grad=False, name=""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self):
        """Backpropagate from this (typically scalar) node."""
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, name={self.name!r})"

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.value.size
        else:
            n = self.value.shape[axis]
        return tsum(self, axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def detach(self):
        return Tensor(self.value.copy())


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to produce it."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value + b.value, parents=(a, b))

    def _bw(g):
        a.accumulate(_unbroadcast(g, a.value.shape))
        b.accumulate(_unbroadcast(g, b.value.shape))

    out._backward = _bw
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.value * b.value, parents=(a, b))

    def _bw(g):
        a.accumulate(_unbroadcast(g * b.value, a.value.shape))
        b.accumulate(_unbroadcast(g * a.value, b.value.shape))

    out._backward = _bw
    return out


def _fast_pow(x: np.ndarray, e: float) -> np.ndarray:
    # np.power with a float exponent is slow; special-case the hot exponents
    if e == -1.0:
        return 1.0 / x
    if e == 0.5:
        return np.sqrt(x)
    if e == -0.5:
        return 1.0 / np.sqrt(x)
    if e == 2.0:
        return x * x
    if e == 3.0:
        return x * x * x
    if e == -2.0:
        return 1.0 / (x * x)
    return x**e


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    out = Tensor(_fast_pow(a.value, exponent), parents=(a,))

    def _bw(g):
        a.accumulate(g * exponent * _fast_pow(a.value, exponent - 1.0))

    out._backward = _bw
    return out


def exp(a) -> Tensor:
    a = as_tensor(a)
    v = np.exp(a.value)
    out = Tensor(v, parents=(a,))

    def _bw(g):
        a.accumulate(g * v)

    out._backward = _bw
    return out


def log(a) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.value), parents=(a,))

    def _bw(g):
        a.accumulate(g / a.value)

    out._backward = _bw
    return out


def sqrt(a) -> Tensor:
    return power(a, 0.5)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    v = np.tanh(a.value)
    out = Tensor(v, parents=(a,))

    def _bw(g):
        a.accumulate(g * (1.0 - v * v))

    out._backward = _bw
    return out


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp with zero gradient outside [lo, hi]."""
    a = as_tensor(a)
    inside = (a.value >= lo) & (a.value <= hi)
    out = Tensor(np.clip(a.value, lo, hi), parents=(a,))

    def _bw(g):
        a.accumulate(g * inside)

    out._backward = _bw
    return out


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    v = a.value @ b.value
    if _MAC_COUNTER is not None:
        batch = int(np.prod(v.shape[:-2], dtype=np.int64)) if v.ndim > 2 else 1
        _MAC_COUNTER[0] += batch * v.shape[-2] * a.value.shape[-1] * v.shape[-1]
    out = Tensor(v, parents=(a, b))

    def _bw(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        # collapse broadcast batch dims back to the operand shapes
        while ga.ndim > a.value.ndim:
            ga = ga.sum(axis=0)
        for i in range(ga.ndim - 2):
            if a.value.shape[i] == 1 and ga.shape[i] != 1:
                ga = ga.sum(axis=i, keepdims=True)
        while gb.ndim > b.value.ndim:
            gb = gb.sum(axis=0)
        for i in range(gb.ndim - 2):
            if b.value.shape[i] == 1 and gb.shape[i] != 1:
                gb = gb.sum(axis=i, keepdims=True)
        a.accumulate(ga)
        b.accumulate(gb)

    out._backward = _bw
    return out


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.sum(axis=axis, keepdims=keepdims), parents=(a,))

    def _bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a.accumulate(np.broadcast_to(g, a.value.shape).copy())

    out._backward = _bw
    return out


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.reshape(shape), parents=(a,))

    def _bw(g):
        a.accumulate(g.reshape(a.value.shape))

    out._backward = _bw
    return out


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value.transpose(axes), parents=(a,))
    inv = np.argsort(axes)

    def _bw(g):
        a.accumulate(g.transpose(inv))

    out._backward = _bw
    return out


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.value[idx], parents=(a,))

    def _bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g)
        a.accumulate(full)

    out._backward = _bw
    return out


def take_rows(table: Tensor, ids: np.ndarray) -> Tensor:
    """Embedding lookup: gather rows of `table` by integer index array."""
    out = Tensor(table.value[ids], parents=(table,))

    def _bw(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids, g)
        table.accumulate(full)

    out._backward = _bw
    return out


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.value for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.value.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            t.accumulate(g[tuple(sl)])

    out._backward = _bw
    return out


def softmax(x, axis=-1) -> Tensor:
    """Numerically stable softmax primitive (max-subtracted)."""
    x = as_tensor(x)
    m = np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(x.value - m)
    p = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(p, parents=(x,))

    def _bw(g):
        dot = (g * p).sum(axis=axis, keepdims=True)
        x.accumulate(p * (g - dot))

    out._backward = _bw
    return out


def logsumexp(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    m = np.max(x.value, axis=axis, keepdims=True)
    return log(exp(x - m).sum(axis=axis, keepdims=False)) + np.squeeze(m, axis=axis)


def gelu(x) -> Tensor:
    """tanh-approximation GELU primitive (smooth, finite-difference friendly)."""
    x = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    v = x.value
    u = c * (v + 0.044715 * v * v * v)
    t = np.tanh(u)
    out = Tensor(0.5 * v * (1.0 + t), parents=(x,))

    def _bw(g):
        du = c * (1.0 + 3.0 * 0.044715 * v * v)
        x.accumulate(g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du))

    out._backward = _bw
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    return xc / sqrt(var + eps) * gain + bias


def l2_normalize(x, axis=-1) -> Tensor:
    n = sqrt((x * x).sum(axis=axis, keepdims=True))
    return x / n
