"""Fused tape ops over per-node sample sets, backed by the compiled kernels."""
from __future__ import annotations

import numpy as np

from .. import _kernels
from .tensor import DimensionError, Tensor, _emit, constant


def _c(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _idx(samples) -> np.ndarray:
    return np.ascontiguousarray(samples, dtype=np.int64)


def sampled_dot(a, b, samples) -> Tensor:
    """out[n, t] = <a[n], b[samples[n, t]]>."""
    a, b = constant(a), constant(b)
    s = _idx(samples)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"row lengths differ: {a.shape} vs {b.shape}")
    ad, bd = _c(a.data), _c(b.data)

    def backward(g):
        return _kernels.sampled_dot_backward(_c(g), ad, bd, s)

    return _emit("sampled_dot", _kernels.sampled_dot(ad, bd, s), (a, b), backward)


def sampled_attention(q, k, v, samples, heads: int, bias=None, scale: float | None = None):
    """Multi-head softmax attention of node n over rows ``samples[n]`` of k/v.

    Head h uses columns h*dk:(h+1)*dk of q, k and v (dk = d / heads). An
    optional (n, s) ``bias`` is added to every head's logits. Returns the
    concatenated head outputs (n, d) and the weights (n, heads, s).
    """
    q, k, v = constant(q), constant(k), constant(v)
    s = _idx(samples)
    d = q.shape[1]
    if d % heads or k.shape[1] != d or v.shape[1] != d:
        raise DimensionError(f"q/k/v widths {q.shape[1]}/{k.shape[1]}/{v.shape[1]} vs {heads} heads")
    if s.ndim != 2 or s.shape[0] != q.shape[0] or s.shape[1] == 0:
        raise ValueError("every node needs a non-empty sample set")
    scale = 1.0 / np.sqrt(d // heads) if scale is None else scale
    qd, kd, vd = _c(q.data), _c(k.data), _c(v.data)
    inputs = (q, k, v)
    bd = None
    if bias is not None:
        bias = constant(bias)
        bd = _c(bias.data)
        inputs = inputs + (bias,)
    out, att = _kernels.attention_forward(qd, kd, vd, bd, s, heads, scale)

    def backward(g):
        dq, dk, dv, db = _kernels.attention_backward(_c(g), qd, kd, vd, att, s, scale)
        return (dq, dk, dv, db) if bias is not None else (dq, dk, dv)

    return _emit("sampled_attention", out, inputs, backward), att
