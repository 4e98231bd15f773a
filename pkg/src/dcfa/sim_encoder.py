"""Similarity-view GCN over a KNN graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .graphs import KnnGraph
from .init import glorot


@dataclass
class GcnStack:
    weights: list[nx.Tensor]
    dropout: float = 0.0


def init_gcn_stack(rng: np.random.Generator, n_in: int, dim: int, layers: int = 2,
                   dropout: float = 0.0, prefix: str = "gcn") -> tuple[GcnStack, dict[str, nx.Tensor]]:
    ws, named = [], {}
    for layer in range(layers):
        w = nx.parameter(glorot(rng, n_in if layer == 0 else dim, dim))
        ws.append(w)
        named[f"{prefix}.W{layer + 1}"] = w
    return GcnStack(ws, dropout), named


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def gcn_forward(graph: KnnGraph, features, stack: GcnStack, training: bool = False,
                rng: np.random.Generator | None = None) -> nx.Tensor:
    """H(l) = ReLU(Â H(l-1) W(l)), dropout on each layer input while training."""
    h = nx.constant(features)
    if h.shape[0] != graph.normalized.shape[0]:
        raise nx.DimensionError(f"features {h.shape} do not match graph of {graph.normalized.shape[0]} nodes")
    if h.shape[1] != stack.weights[0].shape[0]:
        raise nx.DimensionError(f"features {h.shape} do not match first weight {stack.weights[0].shape}")
    a = nx.constant(graph.normalized)
    for w in stack.weights:
        if training and stack.dropout > 0:
            h = nx.mul(h, dropout_mask(rng, h.shape, stack.dropout))
        h = nx.relu(nx.matmul(a, nx.matmul(h, w)))
    return h
