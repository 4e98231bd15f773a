"""Two-view fusion: bidirectional synergistic attention plus baseline strategies."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .init import glorot


@dataclass
class BsamParams:
    w_phi: nx.Tensor  # d x d
    b_phi: nx.Tensor  # d
    w_psi: nx.Tensor
    b_psi: nx.Tensor
    w_omega1: nx.Tensor  # 2d x d
    w_omega2: nx.Tensor
    v: nx.Tensor  # d x 1, shared by both scores


@dataclass
class BaselineParams:
    w_reduce: nx.Tensor | None = None  # 2d x d (concatDim)
    w_query: nx.Tensor | None = None  # d x d (cross)
    w_key: nx.Tensor | None = None


def init_fusion(rng: np.random.Generator, dim: int, mode: str, prefix: str):
    named: dict[str, nx.Tensor] = {}

    def p(name, value):
        t = nx.parameter(value)
        named[f"{prefix}.{name}"] = t
        return t

    if mode == "bsam":
        params = BsamParams(
            p("W_phi", glorot(rng, dim, dim)), p("b_phi", np.zeros(dim)),
            p("W_psi", glorot(rng, dim, dim)), p("b_psi", np.zeros(dim)),
            p("W_omega1", glorot(rng, 2 * dim, dim)), p("W_omega2", glorot(rng, 2 * dim, dim)),
            p("v", glorot(rng, dim, 1)),
        )
    elif mode == "concatDim":
        params = BaselineParams(w_reduce=p("W_reduce", glorot(rng, 2 * dim, dim)))
    elif mode == "cross":
        params = BaselineParams(w_query=p("W_query", glorot(rng, dim, dim)),
                                w_key=p("W_key", glorot(rng, dim, dim)))
    else:
        params = BaselineParams()
    return params, named


def bsam_weights(z1, z2, params: BsamParams) -> tuple[nx.Tensor, nx.Tensor]:
    """Per-row fusion weights (alpha1, alpha2), each (n, 1)."""
    z1, z2 = nx.constant(z1), nx.constant(z2)
    if z1.shape != z2.shape:
        raise nx.DimensionError(f"view shapes differ: {z1.shape} vs {z2.shape}")
    h1 = nx.tanh(nx.add(nx.matmul(z1, params.w_phi), params.b_phi))
    h2 = nx.tanh(nx.add(nx.matmul(z2, params.w_psi), params.b_psi))
    joint = nx.concat([h1, h2], axis=1)
    e1 = nx.matmul(nx.relu(nx.matmul(joint, params.w_omega1)), params.v)
    e2 = nx.matmul(nx.relu(nx.matmul(joint, params.w_omega2)), params.v)
    # two-way softmax
    a1 = nx.sigmoid(nx.sub(e1, e2))
    return a1, nx.sub(1.0, a1)


def bsam_fuse(z1, z2, params: BsamParams) -> nx.Tensor:
    """f = alpha1 z1 + alpha2 z2 with (alpha1, alpha2) = softmax(e1, e2)."""
    a1, a2 = bsam_weights(z1, z2, params)
    return nx.add(nx.mul(a1, z1), nx.mul(a2, z2))


def _row_dot(a: nx.Tensor, b: nx.Tensor) -> nx.Tensor:
    return nx.sum_axis(nx.mul(a, b), axis=-1, keepdims=True)


def baseline_fuse(z1, z2, mode: str, params: BaselineParams | None = None) -> nx.Tensor:
    z1, z2 = nx.constant(z1), nx.constant(z2)
    if z1.shape != z2.shape:
        raise nx.DimensionError(f"view shapes differ: {z1.shape} vs {z2.shape}")
    if mode == "add":
        return nx.add(z1, z2)
    if mode == "multiply":
        return nx.mul(z1, z2)
    if mode == "concatDim":
        return nx.matmul(nx.concat([z1, z2], axis=1), params.w_reduce)
    if mode == "cross":
        d = z1.shape[-1]
        q1, q2 = nx.matmul(z1, params.w_query), nx.matmul(z2, params.w_query)
        k1, k2 = nx.matmul(z1, params.w_key), nx.matmul(z2, params.w_key)
        c = 1.0 / np.sqrt(d)
        # each view attends over both views; the two outputs are averaged
        w1 = nx.sigmoid(nx.scale(nx.sub(_row_dot(q1, k1), _row_dot(q1, k2)), c))
        w2 = nx.sigmoid(nx.scale(nx.sub(_row_dot(q2, k1), _row_dot(q2, k2)), c))
        diff = nx.sub(z1, z2)
        return nx.add(z2, nx.mul(nx.scale(nx.add(w1, w2), 0.5), diff))
    raise ValueError(f"unknown fusion mode {mode!r}")


def fuse(z1, z2, mode: str, params) -> nx.Tensor:
    if mode == "bsam":
        return bsam_fuse(z1, z2, params)
    return baseline_fuse(z1, z2, mode, params)
