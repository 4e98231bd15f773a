"""Dense float64 tensors with a reverse-mode gradient tape.

Every operation returns a new :class:`Tensor`; values are never mutated by an
op. While a :class:`Tape` is active, ops whose inputs require gradients are
appended to it in execution order (a Wengert list), and
:meth:`Tape.gradient` replays that list backwards.
"""
from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .. import _kernels


class DimensionError(ValueError):
    """Operand shapes are not conformable."""


class Tensor:
    __slots__ = ("data", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[-1]

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; all route through the module-level ops
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

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return data if isinstance(data, Tensor) else Tensor(data)


_ACTIVE: list["Tape"] = []


class Tape:
    """Records differentiable ops while active (``with Tape() as tape:``)."""

    def __init__(self):
        self.records: list[tuple[str, Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def gradient(self, loss: Tensor, params: dict[str, Tensor] | Sequence[Tensor]):
        """Backpropagate from scalar ``loss``; one gradient per parameter.

        Returns a dict when ``params`` is a dict, otherwise a list.
        """
        if loss.data.size != 1:
            raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for _, out, inputs, backward in reversed(self.records):
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        if isinstance(params, dict):
            return {k: _grad_or_zero(grads, p) for k, p in params.items()}
        return [_grad_or_zero(grads, p) for p in params]

    def first_nonfinite(self) -> tuple[str, Tensor] | None:
        for op, out, _, _ in self.records:
            if not np.all(np.isfinite(out.data)):
                return op, out
        return None


def _grad_or_zero(grads, p: Tensor) -> np.ndarray:
    g = grads.get(id(p))
    return np.zeros_like(p.data) if g is None else np.broadcast_to(g, p.shape).copy()


def _emit(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], backward: Callable) -> Tensor:
    req = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=req)
    if req and _ACTIVE:
        _ACTIVE[-1].records.append((op, out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------- arithmetic


def add(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit(
        "add", a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit(
        "sub", a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = constant(a), constant(b)
    return _emit(
        "mul", a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def scale(a, c: float) -> Tensor:
    a = constant(a)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes (leading axes broadcast)."""
    a, b = constant(a), constant(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _emit("matmul", a.data @ b.data, (a, b), backward)


# ------------------------------------------------------------- nonlinearities


def relu(x) -> Tensor:
    x = constant(x)
    mask = x.data > 0
    return _emit("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x) -> Tensor:
    x = constant(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # branch-free stable form
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(x) -> Tensor:
    x = constant(x)
    y = _sigmoid(x.data)
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x) -> Tensor:
    """log(1 + exp(x)) without overflow."""
    x = constant(x)
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    return _emit("softplus", y, (x,), lambda g: (g * _sigmoid(x.data),))


_POINTWISE = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


def elementwise(m, fn: str) -> Tensor:
    try:
        return _POINTWISE[fn](m)
    except KeyError:
        raise ValueError(f"unknown pointwise function {fn!r}") from None


def row_softmax(x) -> Tensor:
    """Softmax along the last axis, stabilised by subtracting the row max."""
    x = constant(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit("row_softmax", y, (x,), backward)


def layer_norm(x, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean and unit variance (no affine)."""
    x = constant(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return _emit("layer_norm", xhat, (x,), backward)


def row_norm(x) -> Tensor:
    """Euclidean norm of each row (last axis); gradient 0 at the origin."""
    x = constant(x)
    n = np.sqrt((x.data * x.data).sum(axis=-1))

    def backward(g):
        safe = np.where(n > 0, n, 1.0)
        return (np.where((n > 0)[..., None], x.data / safe[..., None], 0.0) * g[..., None],)

    return _emit("row_norm", n, (x,), backward)


# ----------------------------------------------------------------- structure


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = tuple(constant(t) for t in tensors)
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]
    return _emit(
        "concat", np.concatenate([t.data for t in ts], axis=axis), ts,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def take(x, idx) -> Tensor:
    """Gather rows: ``out[...] = x[idx[...]]`` along axis 0."""
    x = constant(x)
    idx = np.asarray(idx, dtype=np.intp)

    def backward(g):
        rows = np.ascontiguousarray(g.reshape(idx.size, -1))
        flat = np.ascontiguousarray(idx.reshape(-1), dtype=np.int64)
        return (_kernels.scatter_add_rows(flat, rows, x.shape[0]).reshape(x.shape),)

    return _emit("take", x.data[idx], (x,), backward)


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = constant(x)
    return _emit("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes: tuple[int, ...]) -> Tensor:
    x = constant(x)
    inv = tuple(np.argsort(axes))
    return _emit("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inv),))


def total(x) -> Tensor:
    x = constant(x)
    return _emit("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, x.shape),))


def mean(x) -> Tensor:
    x = constant(x)
    n = x.data.size
    return _emit("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, x.shape),))


def sum_axis(x, axis: int, keepdims: bool = False) -> Tensor:
    x = constant(x)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return _emit("sum_axis", x.data.sum(axis=axis, keepdims=keepdims), (x,), backward)


def slice_axis(x, start: int, stop: int, axis: int = 0) -> Tensor:
    """``x[start:stop]`` along ``axis``."""
    x = constant(x)
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def backward(g):
        out = np.zeros_like(x.data)
        out[sl] = g
        return (out,)

    return _emit("slice", x.data[sl], (x,), backward)
