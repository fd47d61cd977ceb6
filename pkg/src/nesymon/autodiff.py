"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Value` wraps a NumPy array together with the recorded operation
that produced it; calling :meth:`Value.backward` on a scalar root fills the
``grad`` field of every reachable leaf with ``requires_grad=True``.  The op
set is intentionally small: elementwise arithmetic, a few activations,
matmul, reductions, gather/concat/slice plumbing, and an epsilon clamp that
guards log/div against boundary inputs.  Broadcasting is supported for
scalars and trailing-aligned shapes (bias-over-batch style); gradients are
summed back over the broadcast axes.

Also hosts the Adam optimizer and the binary checkpoint container used for
model persistence.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Sequence

import numpy as np

EPS = 1e-7

_DEBUG = False


def set_debug(flag: bool) -> None:
    """Enable forward-pass finiteness assertions (slow, for tests/diagnosis)."""
    global _DEBUG
    _DEBUG = bool(flag)


def debug_enabled() -> bool:
    return _DEBUG


class NonFiniteError(RuntimeError):
    """A NaN/Inf showed up where the contract forbids it."""


def _as_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray) and x.dtype == np.float64:
        return x
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing NumPy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Value:
    """Node in the computation graph: data, lazily-allocated grad, backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    # make `ndarray <op> Value` defer to our reflected operators instead of
    # producing an object-dtype ndarray of Values
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward=None):
        self.data = _as_array(data)
        if _DEBUG and not np.all(np.isfinite(self.data)):
            raise NonFiniteError("non-finite value in forward pass")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    # -- basic protocol ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    # -- graph traversal -----------------------------------------------

    def backward(self) -> None:
        """Populate grads of all requires_grad ancestors of this scalar root.

        Repeated calls accumulate; use :meth:`zero_grad` between steps.
        """
        if self.data.size != 1:
            raise ValueError(
                f"backward() requires a scalar root, got shape {self.data.shape}")
        topo: list[Value] = []
        seen: set[int] = set()
        stack: list[tuple[Value, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node._accumulate(g)
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if not (parent.requires_grad or parent._parents):
                    continue
                pid = id(parent)
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg

    # -- operators ------------------------------------------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return slice_(self, key)


class Parameter(Value):
    """Trainable Value with a stable name for checkpointing."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def constant(data) -> Value:
    return Value(data)


def _wrap(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _needs_grad(*vals: Value) -> bool:
    return any(v.requires_grad or v._parents for v in vals)


def _check_broadcast(a: Value, b: Value, op: str) -> None:
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ValueError(
            f"{op}: incompatible shapes {a.data.shape} and {b.data.shape}") from None


# -- elementwise arithmetic --------------------------------------------


def add(a, b) -> Value:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "add")
    out = Value(a.data + b.data, parents=(a, b))
    out._backward = lambda g: (_unbroadcast(g, a.data.shape),
                               _unbroadcast(g, b.data.shape))
    return out


def sub(a, b) -> Value:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "sub")
    out = Value(a.data - b.data, parents=(a, b))
    out._backward = lambda g: (_unbroadcast(g, a.data.shape),
                               _unbroadcast(-g, b.data.shape))
    return out


def mul(a, b) -> Value:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "mul")
    out = Value(a.data * b.data, parents=(a, b))
    out._backward = lambda g: (_unbroadcast(g * b.data, a.data.shape),
                               _unbroadcast(g * a.data, b.data.shape))
    return out


def div(a, b) -> Value:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b, "div")
    out = Value(a.data / b.data, parents=(a, b))
    out._backward = lambda g: (_unbroadcast(g / b.data, a.data.shape),
                               _unbroadcast(-g * a.data / (b.data * b.data),
                                            b.data.shape))
    return out


def power(a, exponent: float) -> Value:
    """a ** exponent for a constant exponent.

    For fractional exponents the base must be non-negative; the gradient
    factor ``base**(exponent-1)`` is evaluated with the base floored at EPS
    so the derivative stays finite at 0 (the forward value is exact).
    """
    a = _wrap(a)
    q = float(exponent)
    if q != round(q) and np.any(a.data < 0):
        raise ValueError("power: fractional exponent over negative base")
    out = Value(np.power(a.data, q), parents=(a,))
    if q < 1.0 and q != 0.0:
        base = np.maximum(a.data, EPS)
    else:
        base = a.data
    out._backward = lambda g: (g * q * np.power(base, q - 1.0),)
    return out


def exp(a) -> Value:
    a = _wrap(a)
    out = Value(np.exp(a.data), parents=(a,))
    out._backward = lambda g: (g * out.data,)
    return out


def log(a) -> Value:
    a = _wrap(a)
    if np.any(a.data <= 0):
        raise ValueError("log: non-positive input (clamp_eps the argument first)")
    out = Value(np.log(a.data), parents=(a,))
    out._backward = lambda g: (g / a.data,)
    return out


def tanh(a) -> Value:
    a = _wrap(a)
    out = Value(np.tanh(a.data), parents=(a,))
    out._backward = lambda g: (g * (1.0 - out.data * out.data),)
    return out


def sigmoid(a) -> Value:
    a = _wrap(a)
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = Value(s, parents=(a,))
    out._backward = lambda g: (g * out.data * (1.0 - out.data),)
    return out


def clamp_eps(a, lo: float = EPS, hi: float | None = None) -> Value:
    """Clamp into [lo, hi]; gradient passes through where no clamping occurred."""
    a = _wrap(a)
    clipped = np.clip(a.data, lo, hi)
    out = Value(clipped, parents=(a,))
    mask = (a.data >= lo) if hi is None else ((a.data >= lo) & (a.data <= hi))
    out._backward = lambda g: (g * mask,)
    return out


# -- linear algebra and reshaping --------------------------------------


def matmul(a, b) -> Value:
    a, b = _wrap(a), _wrap(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    out = Value(a.data @ b.data, parents=(a, b))
    out._backward = lambda g: (g @ b.data.T, a.data.T @ g)
    return out


def sum_(a, axis: int | None = None) -> Value:
    a = _wrap(a)
    out = Value(a.data.sum(axis=axis), parents=(a,))

    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)

    out._backward = back
    return out


def mean(a, axis: int | None = None) -> Value:
    a = _wrap(a)
    n = a.data.size if axis is None else a.data.shape[axis]
    return mul(sum_(a, axis=axis), 1.0 / n)


def reshape(a, shape) -> Value:
    a = _wrap(a)
    out = Value(a.data.reshape(shape), parents=(a,))
    out._backward = lambda g: (g.reshape(a.data.shape),)
    return out


def concat(values: Sequence, axis: int = 0) -> Value:
    vals = [_wrap(v) for v in values]
    if not vals:
        raise ValueError("concat: empty input list")
    out = Value(np.concatenate([v.data for v in vals], axis=axis),
                parents=tuple(vals))
    sizes = [v.data.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    out._backward = back
    return out


def slice_(a, key) -> Value:
    """Basic slicing; the backward pass scatters into a zero array."""
    a = _wrap(a)
    out = Value(a.data[key], parents=(a,))

    def back(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    out._backward = back
    return out


def take_rows(a, indices) -> Value:
    """Gather along axis 0 with an integer index array of any shape."""
    a = _wrap(a)
    idx = np.asarray(indices, dtype=np.intp)
    out = Value(a.data[idx], parents=(a,))

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    out._backward = back
    return out


# -- optimizer ----------------------------------------------------------


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params: Iterable[Parameter], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NonFiniteError(f"non-finite gradient for parameter {p.name!r}")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1.0 - self.beta2 ** self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


# -- checkpoint container ----------------------------------------------

_MAGIC = b"NSY1"


def save_checkpoint(path, params: Sequence[Parameter], meta: dict | None = None) -> None:
    """Write named arrays plus a JSON manifest into one binary file.

    Layout: 4-byte magic, little-endian uint64 manifest length, UTF-8 JSON
    manifest (array names/shapes/dtypes + user metadata), then the raw
    array bytes concatenated in manifest order.
    """
    manifest = {
        "arrays": [{"name": p.name, "shape": list(p.data.shape),
                    "dtype": p.data.dtype.str} for p in params],
        "meta": meta or {},
    }
    blob = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in params:
            fh.write(np.ascontiguousarray(p.data).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint; returns (name -> array, metadata)."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        (length,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(length).decode("utf-8"))
        arrays: dict[str, np.ndarray] = {}
        for entry in manifest["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(
                entry["shape"]).copy()
    return arrays, manifest["meta"]
