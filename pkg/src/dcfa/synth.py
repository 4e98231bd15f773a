"""Planted-community bipartite datasets for desk-scale experiments."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, make_dataset, write_matrix


@dataclass(frozen=True)
class BlockModelSpec:
    n_drugs: int = 60
    n_microbes: int = 30
    communities: int = 3
    p_in: float = 0.6
    p_out: float = 0.02
    sigma_s: float = 0.1

    def validate(self) -> "BlockModelSpec":
        for name in ("p_in", "p_out"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be a probability, got {v}")
        if self.sigma_s < 0:
            raise ValueError("sigma_s must be non-negative")
        if self.communities < 1 or self.n_drugs < 1 or self.n_microbes < 1:
            raise ValueError("sizes and community count must be positive")
        return self


@dataclass(frozen=True)
class SyntheticData:
    dataset: Dataset
    drug_community: np.ndarray
    microbe_community: np.ndarray


def _similarity(labels: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    n = len(labels)
    base = (labels[:, None] == labels[None, :]).astype(np.float64)
    noise = np.triu(rng.normal(0.0, sigma, size=(n, n)), 1) if sigma > 0 else np.zeros((n, n))
    sim = np.clip(base + noise + noise.T, 0.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return np.round(sim, 6)


def generate(spec: BlockModelSpec, seed: int = 0) -> SyntheticData:
    """Stochastic block model over drugs x microbes.

    Each side is split into ``communities`` near-equal groups. A pair is
    associated with probability ``p_in`` when both ends share a community and
    ``p_out`` otherwise. Similarity is the shared-community indicator plus
    symmetric Gaussian noise of scale ``sigma_s``, clipped to [0, 1].
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    c = spec.communities
    dc = rng.permutation(np.arange(spec.n_drugs) % c)
    mc = rng.permutation(np.arange(spec.n_microbes) % c)
    prob = np.where(dc[:, None] == mc[None, :], spec.p_in, spec.p_out)
    assoc = (rng.random(prob.shape) < prob).astype(np.int8)
    dsim = _similarity(dc, spec.sigma_s, rng)
    msim = _similarity(mc, spec.sigma_s, rng)
    width_d, width_m = len(str(spec.n_drugs)), len(str(spec.n_microbes))
    ds = make_dataset(assoc, dsim, msim,
                      [f"drug{i:0{width_d}d}" for i in range(spec.n_drugs)],
                      [f"microbe{j:0{width_m}d}" for j in range(spec.n_microbes)])
    return SyntheticData(ds, dc, mc)


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, Path]:
    """Write the three input tables plus community labels; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = data.dataset
    paths = {
        "assoc": out / "associations.tsv",
        "drug_sim": out / "drug_sim.tsv",
        "microbe_sim": out / "microbe_sim.tsv",
        "communities": out / "communities.tsv",
    }
    write_matrix(paths["assoc"], ds.associations, ds.drug_names, ds.microbe_names)
    write_matrix(paths["drug_sim"], ds.drug_sim, ds.drug_names, ds.drug_names)
    write_matrix(paths["microbe_sim"], ds.microbe_sim, ds.microbe_names, ds.microbe_names)
    with open(paths["communities"], "w") as fh:
        fh.write("node\ttype\tcommunity\n")
        for name, c in zip(ds.drug_names, data.drug_community):
            fh.write(f"{name}\tdrug\t{c}\n")
        for name, c in zip(ds.microbe_names, data.microbe_community):
            fh.write(f"{name}\tmicrobe\t{c}\n")
    return paths


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
