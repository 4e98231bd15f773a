"""Pair scorer, weighted binary cross-entropy and the total objective."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .init import glorot


@dataclass
class MlpParams:
    w1: nx.Tensor  # 2d x d   (rows 0..d-1 act on the drug half)
    b1: nx.Tensor
    w2: nx.Tensor  # d x ceil(d/2)
    b2: nx.Tensor
    w3: nx.Tensor  # ceil(d/2) x 1
    b3: nx.Tensor


def init_mlp(rng: np.random.Generator, dim: int, prefix: str = "mlp"):
    half = math.ceil(dim / 2)
    shapes = {"W1": (2 * dim, dim), "W2": (dim, half), "W3": (half, 1)}
    named = {}
    for name, (i, o) in shapes.items():
        named[f"{prefix}.{name}"] = nx.parameter(glorot(rng, i, o))
        named[f"{prefix}.b{name[1]}"] = nx.parameter(np.zeros(o))
    mlp = MlpParams(*(named[f"{prefix}.{k}"] for k in ("W1", "b1", "W2", "b2", "W3", "b3")))
    return mlp, named


def score_pairs(f_drug, f_microbe, pairs: np.ndarray, mlp: MlpParams) -> nx.Tensor:
    """Logits of MLP([f_drug[i] ‖ f_microbe[j]]) for every (i, j) in ``pairs``.

    The first layer is applied per node and gathered per pair, which equals
    multiplying the concatenated row by the full 2d x d weight.
    """
    fd, fm = nx.constant(f_drug), nx.constant(f_microbe)
    d = fd.shape[1]
    if fm.shape[1] != d or mlp.w1.shape[0] != 2 * d:
        raise nx.DimensionError(f"fused rows {fd.shape}/{fm.shape} vs first layer {mlp.w1.shape}")
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    top = nx.matmul(fd, nx.slice_axis(mlp.w1, 0, d, 0))
    bottom = nx.matmul(fm, nx.slice_axis(mlp.w1, d, 2 * d, 0))
    h = nx.relu(nx.add(nx.add(nx.take(top, pairs[:, 0]), nx.take(bottom, pairs[:, 1])), mlp.b1))
    h = nx.relu(nx.add(nx.matmul(h, mlp.w2), mlp.b2))
    z = nx.add(nx.matmul(h, mlp.w3), mlp.b3)
    return nx.reshape(z, (len(pairs),))


def score_pair(f_drug_row, f_microbe_row, mlp: MlpParams) -> tuple[float, float]:
    """(logit, probability) for a single drug/microbe pair."""
    fd = np.asarray(f_drug_row, dtype=np.float64)[None, :]
    fm = np.asarray(f_microbe_row, dtype=np.float64)[None, :]
    if fd.shape != fm.shape:
        raise nx.DimensionError(f"row lengths differ: {fd.shape[1]} vs {fm.shape[1]}")
    z = float(score_pairs(fd, fm, np.array([[0, 0]]), mlp).data[0])
    return z, float(nx.sigmoid(np.array(z)).data)


def weighted_bce(logits, labels, pos_weight: float = 1.0, reduction: str = "mean") -> nx.Tensor:
    """-[w·y·log σ(z) + (1-y)·log(1-σ(z))], from logits via softplus.

    Uses log σ(z) = -softplus(-z) and log(1-σ(z)) = -softplus(z).
    """
    z = nx.constant(logits)
    y = np.asarray(labels, dtype=np.float64).reshape(z.shape)
    if z.data.size == 0:
        raise ValueError("weighted_bce needs at least one pair")
    sign = 1.0 - 2.0 * y  # +1 for negatives, -1 for positives
    coef = pos_weight * y + (1.0 - y)
    per_pair = nx.mul(nx.softplus(nx.mul(z, sign)), coef)
    if reduction == "sum":
        return nx.total(per_pair)
    if reduction == "mean":
        return nx.mean(per_pair)
    raise ValueError(f"unknown reduction {reduction!r}")


def total_loss(l_rel, l_adv_drug, l_adv_microbe, beta1: float, beta2: float):
    """L_rel + beta1·L_adv,drug + beta2·L_adv,microbe (tensors or floats)."""
    if not any(isinstance(x, nx.Tensor) for x in (l_rel, l_adv_drug, l_adv_microbe)):
        return l_rel + beta1 * l_adv_drug + beta2 * l_adv_microbe
    return nx.add(nx.add(l_rel, nx.scale(l_adv_drug, beta1)), nx.scale(l_adv_microbe, beta2))
