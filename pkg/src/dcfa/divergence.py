"""Margin losses that push the association and similarity views apart."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx


@dataclass(frozen=True)
class DivergenceConfig:
    gamma: float = 1.0
    beta1: float = 0.03
    beta2: float = 0.03

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


def pair_distance(z1row, z2row) -> float:
    a, b = np.asarray(z1row, dtype=np.float64), np.asarray(z2row, dtype=np.float64)
    if a.shape != b.shape:
        raise nx.DimensionError(f"row lengths differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def adversarial_loss(z1, z2, gamma: float, close: bool = False) -> nx.Tensor:
    """Mean hinge max(0, gamma - ||z1_i - z2_i||) over aligned rows.

    ``close=True`` inverts the objective to max(0, ||z1_i - z2_i|| - gamma),
    pulling the views together instead.
    """
    z1, z2 = nx.constant(z1), nx.constant(z2)
    if z1.shape != z2.shape:
        raise nx.DimensionError(f"view shapes differ: {z1.shape} vs {z2.shape}")
    dist = nx.row_norm(nx.sub(z1, z2))
    gap = nx.sub(dist, gamma) if close else nx.sub(gamma, dist)
    return nx.mean(nx.relu(gap))
