"""Dataset loading, warm/cold-start splits and split export."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Input files are missing, malformed or mutually inconsistent."""


@dataclass(frozen=True)
class Dataset:
    associations: np.ndarray  # drugs x microbes, {0, 1}
    drug_sim: np.ndarray
    microbe_sim: np.ndarray
    drug_names: tuple[str, ...]
    microbe_names: tuple[str, ...]

    @property
    def n_drugs(self) -> int:
        return self.associations.shape[0]

    @property
    def n_microbes(self) -> int:
        return self.associations.shape[1]

    def positives(self) -> np.ndarray:
        return np.argwhere(self.associations > 0).astype(np.int64)

    def negatives(self) -> np.ndarray:
        return np.argwhere(self.associations == 0).astype(np.int64)


@dataclass(frozen=True)
class SplitPlan:
    train_pos: np.ndarray  # (n, 2) int64 (drug, microbe)
    test_pos: np.ndarray
    train_neg: np.ndarray
    test_neg: np.ndarray
    mode: str = "warm"  # warm | coldStartDrug | coldStartMicrobe
    seed: int = 0
    held_out: tuple[int, ...] = ()
    degenerate: bool = False
    notes: dict = field(default_factory=dict)


# ------------------------------------------------------------------- loading


def _read_table(path: Path) -> tuple[list[str], list[str], np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="") as fh:
        head = fh.readline()
        fh.seek(0)
        delim = "\t" if "\t" in head else ","
        rows = [r for r in csv.reader(fh, delimiter=delim) if r]
    if len(rows) < 2:
        raise DataError(f"{path}: need a header row and at least one data row")
    cols = [c.strip() for c in rows[0][1:]]
    names, values = [], []
    for ln, r in enumerate(rows[1:], start=2):
        if len(r) != len(cols) + 1:
            raise DataError(f"{path}:{ln}: expected {len(cols) + 1} fields, got {len(r)}")
        names.append(r[0].strip())
        try:
            values.append([float(v) for v in r[1:]])
        except ValueError as exc:
            raise DataError(f"{path}:{ln}: {exc}") from None
    return names, cols, np.array(values, dtype=np.float64).reshape(len(names), len(cols))


def _check_similarity(sim: np.ndarray, what: str) -> np.ndarray:
    if sim.shape[0] != sim.shape[1]:
        raise DataError(f"{what} similarity is not square: {sim.shape}")
    if not np.all(np.isfinite(sim)):
        raise DataError(f"{what} similarity has non-finite entries")
    if sim.min() < -1e-6 or sim.max() > 1 + 1e-6:
        raise DataError(f"{what} similarity has entries outside [0, 1]")
    asym = np.abs(sim - sim.T).max() if sim.size else 0.0
    if asym > 1e-6:
        raise DataError(f"{what} similarity is not symmetric (max deviation {asym:.3g})")
    sim = np.clip((sim + sim.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def make_dataset(assoc, drug_sim, microbe_sim, drug_names=None, microbe_names=None) -> Dataset:
    """Validate arrays and build a :class:`Dataset`."""
    a = np.asarray(assoc, dtype=np.float64)
    if a.ndim != 2:
        raise DataError("association matrix must be 2-D")
    if not np.all((a == 0) | (a == 1)):
        raise DataError("association matrix must contain only 0/1 entries")
    nd, nm = a.shape
    ds = _check_similarity(np.array(drug_sim, dtype=np.float64), "drug")
    ms = _check_similarity(np.array(microbe_sim, dtype=np.float64), "microbe")
    if ds.shape[0] != nd:
        raise DataError(f"drug similarity is {ds.shape}, associations have {nd} drugs")
    if ms.shape[0] != nm:
        raise DataError(f"microbe similarity is {ms.shape}, associations have {nm} microbes")
    drug_names = tuple(drug_names) if drug_names is not None else tuple(f"d{i}" for i in range(nd))
    microbe_names = tuple(microbe_names) if microbe_names is not None else tuple(f"m{j}" for j in range(nm))
    if len(drug_names) != nd or len(microbe_names) != nm:
        raise DataError("name lists do not match matrix dimensions")
    return Dataset(a.astype(np.int8), ds, ms, drug_names, microbe_names)


def load_dataset(assoc_path, drug_sim_path=None, microbe_sim_path=None) -> Dataset:
    """Load association and similarity tables (TSV or CSV with name headers).

    Either similarity path may be ``None``; the missing matrix is then
    generated with :func:`gaussian_profile_similarity` from the full
    association matrix.
    """
    drugs, microbes, assoc = _read_table(assoc_path)
    if drug_sim_path is not None:
        dn, dc, dsim = _read_table(drug_sim_path)
        if dn != dc or dn != drugs:
            raise DataError(f"{drug_sim_path}: drug names do not match the association file")
    else:
        dsim = gaussian_profile_similarity(assoc)
    if microbe_sim_path is not None:
        mn, mc, msim = _read_table(microbe_sim_path)
        if mn != mc or mn != microbes:
            raise DataError(f"{microbe_sim_path}: microbe names do not match the association file")
    else:
        msim = gaussian_profile_similarity(assoc.T)
    return make_dataset(assoc, dsim, msim, drugs, microbes)


def gaussian_profile_similarity(profiles: np.ndarray) -> np.ndarray:
    """Gaussian interaction-profile kernel over the rows of ``profiles``.

    Bandwidth is 1 / mean squared row norm (all-zero profiles give bandwidth 1).
    """
    p = np.asarray(profiles, dtype=np.float64)
    sq = (p * p).sum(axis=1)
    mean_sq = sq.mean() if sq.size else 0.0
    gamma = 1.0 / mean_sq if mean_sq > 0 else 1.0
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * p @ p.T, 0.0)
    k = np.exp(-gamma * d2)
    np.fill_diagonal(k, 1.0)
    return k


def training_similarity(ds: Dataset, plan: "SplitPlan", drug: bool = True, microbe: bool = True) -> Dataset:
    """Recompute fallback similarities from training positives only.

    Use after splitting when a similarity file was absent, so held-out
    associations never shape the kernel.
    """
    train = np.zeros_like(ds.associations, dtype=np.float64)
    pos = np.asarray(plan.train_pos, dtype=np.int64).reshape(-1, 2)
    train[pos[:, 0], pos[:, 1]] = 1.0
    dsim = gaussian_profile_similarity(train) if drug else ds.drug_sim
    msim = gaussian_profile_similarity(train.T) if microbe else ds.microbe_sim
    return make_dataset(ds.associations, dsim, msim, ds.drug_names, ds.microbe_names)


def toy_paths() -> tuple[Path, Path, Path]:
    """Association, drug-similarity and microbe-similarity files of the bundled 8 x 5 toy set."""
    root = Path(__file__).resolve().parent / "toydata"
    return root / "associations.tsv", root / "drug_sim.tsv", root / "microbe_sim.tsv"


def _fmt(v: float) -> str:
    # shortest repr that round-trips exactly; integers without a trailing ".0"
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def write_matrix(path, matrix: np.ndarray, row_names, col_names) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow([""] + list(col_names))
        for name, row in zip(row_names, matrix):
            w.writerow([name] + [_fmt(v) for v in row])


# -------------------------------------------------------------------- splits


def _pairs(a) -> np.ndarray:
    return np.asarray(a, dtype=np.int64).reshape(-1, 2)


def warm_split(ds: Dataset, test_fraction: float = 0.1, seed: int = 0,
               test_negatives: str = "balanced") -> SplitPlan:
    """Hold out a random fraction of the known associations.

    ``test_negatives="balanced"`` samples as many test negatives as test
    positives; ``"all"`` instead holds out the same fraction of the
    non-associated pairs.
    """
    if not 0 < test_fraction < 1:
        raise ValueError("test_fraction must lie in (0, 1)")
    pos, neg = ds.positives(), ds.negatives()
    if len(pos) < 2:
        raise DataError("need at least 2 known associations to split")
    rng = np.random.default_rng(seed)
    n_test = min(max(1, math.floor(test_fraction * len(pos) + 1e-9)), len(pos) - 1)
    perm = rng.permutation(len(pos))
    test_pos, train_pos = pos[np.sort(perm[:n_test])], pos[np.sort(perm[n_test:])]
    if test_negatives == "balanced":
        n_neg = min(n_test, len(neg))
    elif test_negatives == "all":
        n_neg = math.floor(test_fraction * len(neg) + 1e-9)
    else:
        raise ValueError(f"unknown test-negative protocol {test_negatives!r}")
    nperm = rng.permutation(len(neg))
    test_neg, train_neg = neg[np.sort(nperm[:n_neg])], neg[np.sort(nperm[n_neg:])]
    return SplitPlan(train_pos, test_pos, train_neg, test_neg, "warm", seed,
                     notes={"test_negatives": test_negatives})


def cold_start_split(ds: Dataset, side: str, node_fraction: float = 0.02, seed: int = 0,
                     per_node: bool = False) -> list[SplitPlan]:
    """Hold out every association of a random subset of drugs or microbes.

    Selects ``ceil(node_fraction * n)`` nodes. Their pairs are removed from
    training entirely (positives and negatives). Returns one plan covering all
    selected nodes, or with ``per_node=True`` one plan per selected node.
    """
    if side not in ("drug", "microbe"):
        raise ValueError("side must be 'drug' or 'microbe'")
    if not 0 < node_fraction < 1:
        raise ValueError("node_fraction must lie in (0, 1)")
    axis = 0 if side == "drug" else 1
    n = ds.associations.shape[axis]
    count = min(math.ceil(node_fraction * n - 1e-9), n)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=count, replace=False))
    groups = [chosen[i:i + 1] for i in range(count)] if per_node else [chosen]
    pos, neg = ds.positives(), ds.negatives()
    if len(pos) and np.isin(pos[:, axis], chosen).all():
        raise DataError("held-out nodes cover every known association")
    mode = "coldStartDrug" if side == "drug" else "coldStartMicrobe"
    plans = []
    for group in groups:
        pin = np.isin(pos[:, axis], group)
        nin = np.isin(neg[:, axis], group)
        test_pos = pos[pin]
        cand = neg[nin]
        k = min(len(test_pos), len(cand))
        test_neg = cand[np.sort(rng.permutation(len(cand))[:k])]
        plans.append(SplitPlan(
            pos[~pin], test_pos, neg[~nin], _pairs(test_neg), mode, seed,
            held_out=tuple(int(x) for x in group), degenerate=len(test_pos) == 0,
        ))
    return plans


# ------------------------------------------------------------------ export

_LABELS = ("trainPos", "trainNeg", "testPos", "testNeg")


def write_split(plan: SplitPlan, path) -> None:
    with open(path, "w") as fh:
        held = ",".join(map(str, plan.held_out))
        fh.write(f"# mode={plan.mode} seed={plan.seed} held_out={held}\n")
        for label, arr in zip(_LABELS, (plan.train_pos, plan.train_neg, plan.test_pos, plan.test_neg)):
            for d, m in arr:
                fh.write(f"{d}\t{m}\t{label}\n")


def read_split(path) -> SplitPlan:
    buckets: dict[str, list] = {k: [] for k in _LABELS}
    meta = {"mode": "warm", "seed": "0", "held_out": ""}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    meta[key] = val
                continue
            d, m, label = line.split("\t")
            if label not in buckets:
                raise DataError(f"{path}: unknown pair label {label!r}")
            buckets[label].append((int(d), int(m)))
    held = tuple(int(x) for x in meta["held_out"].split(",") if x)
    return SplitPlan(
        _pairs(buckets["trainPos"]), _pairs(buckets["testPos"]),
        _pairs(buckets["trainNeg"]), _pairs(buckets["testNeg"]),
        meta["mode"], int(meta["seed"]), held, degenerate=not buckets["testPos"],
    )
