"""KNN similarity graphs and the drug-microbe heterogeneous graph."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .data import Dataset, SplitPlan


@dataclass(frozen=True)
class KnnGraph:
    adjacency: np.ndarray  # binary, row i = {i} plus its k nearest
    normalized: np.ndarray
    k: int


def build_knn_graph(sim: np.ndarray, k: int) -> KnnGraph:
    """Directed KNN adjacency with self-loops; ties go to the smaller index."""
    sim = np.ascontiguousarray(sim, dtype=np.float64)
    n = sim.shape[0]
    if not 0 <= k <= n - 1:
        raise ValueError(f"k must lie in [0, {n - 1}], got {k}")
    nbrs = _kernels.knn_indices(sim, int(k))
    a = np.eye(n)
    if k:
        a[np.repeat(np.arange(n), k), nbrs.reshape(-1)] = 1.0
    return KnnGraph(a, normalize_adjacency(a), k)


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """D^-1/2 A D^-1/2 with D the row degrees."""
    a = np.asarray(a, dtype=np.float64)
    deg = a.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError(f"zero-degree rows: {np.flatnonzero(deg <= 0).tolist()}")
    inv = 1.0 / np.sqrt(deg)
    return inv[:, None] * a * inv[None, :]


@dataclass
class HeteroGraph:
    """Bipartite graph; drugs are nodes 0..nd-1, microbes nd..nd+nm-1."""

    n_drugs: int
    n_microbes: int
    edges: np.ndarray  # (e, 2) global node ids (drug, microbe)
    indptr: np.ndarray
    indices: np.ndarray
    samples: np.ndarray  # (n, s) attention-sample sets, rows sorted ascending

    @property
    def n_nodes(self) -> int:
        return self.n_drugs + self.n_microbes

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)

    def mean_operator(self) -> np.ndarray:
        """Row-stochastic neighbour-mean matrix; isolated nodes get zero rows."""
        n = self.n_nodes
        m = np.zeros((n, n))
        deg = self.degree()
        for v in range(n):
            if deg[v]:
                m[v, self.neighbors(v)] = 1.0 / deg[v]
        return m

    def gcn_operator(self) -> np.ndarray:
        """Symmetric-normalised adjacency with self-loops."""
        a = np.eye(self.n_nodes)
        if len(self.edges):
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return normalize_adjacency(a)

    def dump_edges(self, path) -> None:
        with open(path, "w") as fh:
            for u, v in self.edges:
                fh.write(f"{u}\t{v}\n")


def _initial_samples(ds: Dataset, s: int, rng: np.random.Generator) -> np.ndarray:
    nd, nm = ds.n_drugs, ds.n_microbes
    n = nd + nm
    s = min(s, n - 1)
    out = np.empty((n, s), dtype=np.int64)
    for offset, size, sim, other_lo, other_n in ((0, nd, ds.drug_sim, nd, nm), (nd, nm, ds.microbe_sim, 0, nd)):
        take = min(s, size - 1)
        same = _kernels.knn_indices(np.ascontiguousarray(sim), take) + offset
        for r in range(size):
            pad = s - take
            extra = other_lo + rng.choice(other_n, size=pad, replace=False) if pad else np.empty(0, np.int64)
            out[offset + r] = np.sort(np.concatenate([same[r], extra]))
    return out


def build_hetero_graph(ds: Dataset, plan: SplitPlan, sample_size: int = 15, seed: int = 0) -> HeteroGraph:
    """Heterogeneous graph over training positives with initial sample sets.

    Each node starts from its ``sample_size`` most similar same-type nodes,
    padded with seeded random opposite-type nodes when its side is too small.
    """
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    nd, nm = ds.n_drugs, ds.n_microbes
    n = nd + nm
    tp = np.asarray(plan.train_pos, dtype=np.int64).reshape(-1, 2)
    edges = np.stack([tp[:, 0], tp[:, 1] + nd], axis=1) if len(tp) else np.empty((0, 2), np.int64)
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    indptr = np.cumsum(indptr)
    rng = np.random.default_rng(seed)
    samples = _initial_samples(ds, sample_size, rng)
    return HeteroGraph(nd, nm, edges, indptr, dst.astype(np.int64), samples)


def update_samples(graph: HeteroGraph, features: np.ndarray, u: np.ndarray,
                   samples: np.ndarray | None = None) -> np.ndarray:
    """Re-rank candidate samples by <h_i U, h_c>; returns new (n, s) sets."""
    h = np.ascontiguousarray(features, dtype=np.float64)
    hu = np.ascontiguousarray(h @ u)
    cur = np.ascontiguousarray(graph.samples if samples is None else samples, dtype=np.int64)
    return _kernels.update_samples(hu, h, cur, graph.indptr, graph.indices)
