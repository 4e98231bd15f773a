"""Ranking metrics, seed aggregation, cold-start runs and candidate ranking."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .data import DataError, Dataset, SplitPlan, cold_start_split
from .model import DcfaModel
from .trainer import fit_model

METRIC_NAMES = ("auroc", "aupr", "precision", "recall", "f1")


class MetricError(ValueError):
    pass


def _prep(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise MetricError(f"{s.size} scores vs {y.size} labels")
    return s, y


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("auroc needs at least one positive and one negative")
    # midranks handle ties exactly
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    sorted_s = s[order]
    _, start, counts = np.unique(sorted_s, return_index=True, return_counts=True)
    mid = start + (counts + 1) / 2.0
    ranks[order] = np.repeat(mid, counts)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def aupr(scores, labels) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds are the distinct scores in descending order; each step adds
    (recall gain) x (precision at that threshold), without interpolation.
    """
    s, y = _prep(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise MetricError("aupr needs at least one positive")
    uniq, inv = np.unique(-s, return_inverse=True)
    tp = np.cumsum(np.bincount(inv, weights=y, minlength=uniq.size))
    n_at = np.cumsum(np.bincount(inv, minlength=uniq.size))
    precision = tp / n_at
    recall = tp / n_pos
    gain = np.diff(np.concatenate([[0.0], recall]))
    return float((gain * precision).sum())


@dataclass(frozen=True)
class ThresholdMetrics:
    precision: float
    recall: float
    f1: float
    flags: tuple[str, ...] = ()


def threshold_metrics(scores, labels, threshold: float = 0.5) -> ThresholdMetrics:
    s, y = _prep(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    flags = []
    if tp + fp == 0:
        flags.append("no_predicted_positives")
    if tp + fn == 0:
        flags.append("no_actual_positives")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return ThresholdMetrics(p, r, f1, tuple(flags))


@dataclass(frozen=True)
class RunMetrics:
    auroc: float
    aupr: float
    precision: float
    recall: float
    f1: float
    threshold: float = 0.5
    flags: tuple[str, ...] = ()
    tag: str = ""

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in METRIC_NAMES}


def compute_metrics(scores, labels, threshold: float = 0.5, tag: str = "") -> RunMetrics:
    t = threshold_metrics(scores, labels, threshold)
    return RunMetrics(auroc(scores, labels), aupr(scores, labels), t.precision, t.recall, t.f1,
                      threshold, t.flags, tag)


@dataclass
class MetricsReport:
    """Per-run metrics plus mean and sample std (n - 1) across runs."""

    runs: list[RunMetrics] = field(default_factory=list)
    protocol: str = ""
    label: str = ""
    notes: list[str] = field(default_factory=list)

    @property
    def seed_count(self) -> int:
        return len(self.runs)

    def values(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.runs], dtype=np.float64)

    def mean(self, name: str) -> float:
        v = self.values(name)
        return float(v.mean()) if v.size else math.nan

    def std(self, name: str) -> float:
        v = self.values(name)
        return float(v.std(ddof=1)) if v.size > 1 else 0.0

    def summary(self) -> dict[str, tuple[float, float]]:
        return {k: (self.mean(k), self.std(k)) for k in METRIC_NAMES}

    def to_table(self) -> str:
        head = f"{self.label or 'metrics'} ({self.seed_count} run(s); negatives: {self.protocol or 'n/a'})"
        lines = [head, f"{'metric':<10}{'mean':>10}{'std':>10}"]
        for k, (m, s) in self.summary().items():
            lines.append(f"{k:<10}{m:>10.4f}{s:>10.4f}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)

    def to_kv(self) -> str:
        out = [f"label={self.label}", f"protocol={self.protocol}", f"runs={self.seed_count}"]
        if self.runs:
            out.append(f"threshold={self.runs[0].threshold!r}")
        for k, (m, s) in self.summary().items():
            out.append(f"{k}.mean={m!r}")
            out.append(f"{k}.std={s!r}")
        for i, r in enumerate(self.runs):
            for k in METRIC_NAMES:
                out.append(f"run{i}.{k}={getattr(r, k)!r}")
            if r.tag:
                out.append(f"run{i}.tag={r.tag}")
            if r.flags:
                out.append(f"run{i}.flags={','.join(r.flags)}")
        out.extend(f"note={n}" for n in self.notes)
        return "\n".join(out) + "\n"

    def write(self, out_dir, stem: str = "metrics") -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        txt, kv = out_dir / f"{stem}.txt", out_dir / f"{stem}.kv"
        txt.write_text(self.to_table() + "\n")
        kv.write_text(self.to_kv())
        return txt, kv


def held_out_pairs(plan: SplitPlan) -> tuple[np.ndarray, np.ndarray]:
    pos = np.asarray(plan.test_pos, dtype=np.int64).reshape(-1, 2)
    neg = np.asarray(plan.test_neg, dtype=np.int64).reshape(-1, 2)
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return np.concatenate([pos, neg]), labels


def evaluate(model: DcfaModel, plan: SplitPlan, threshold: float = 0.5, tag: str = "") -> RunMetrics:
    pairs, labels = held_out_pairs(plan)
    return compute_metrics(model.predict(pairs), labels, threshold, tag)


def run_cold_start(ds: Dataset, cfg: TrainConfig, side: str, fractions: Sequence[float] = (0.02, 0.04),
                   seeds: Sequence[int] = (0,), threshold: float = 0.5,
                   prepare: Callable[[SplitPlan], Dataset] | None = None) -> MetricsReport:
    """Train once per (fraction, seed) with that side's nodes held out; pool the runs.

    ``prepare`` maps a split to the dataset trained on (e.g. to rebuild
    similarity kernels from training pairs only).
    """
    report = MetricsReport(protocol="balanced negatives of held-out nodes", label=f"coldstart:{side}")
    for frac in fractions:
        for seed in seeds:
            for plan in cold_start_split(ds, side, frac, seed):
                tag = f"fraction={frac} seed={seed} held_out={','.join(map(str, plan.held_out))}"
                if plan.degenerate:
                    report.notes.append(f"skipped degenerate split ({tag})")
                    continue
                train_ds = prepare(plan) if prepare else ds
                state = fit_model(train_ds, plan, cfg.replace(seed=seed))
                report.runs.append(evaluate(state.model, plan, threshold, tag))
    return report


@dataclass(frozen=True)
class RankedCandidate:
    index: int
    name: str
    frequency: int
    mean_score: float


def _resolve(ds: Dataset, targets) -> tuple[str, np.ndarray]:
    drug_ix = {n: i for i, n in enumerate(ds.drug_names)}
    mic_ix = {n: i for i, n in enumerate(ds.microbe_names)}
    names = [targets] if isinstance(targets, str) else list(targets)
    if not names:
        raise DataError("no target nodes given")
    if all(n in mic_ix for n in names):
        return "microbe", np.array([mic_ix[n] for n in names])
    if all(n in drug_ix for n in names):
        return "drug", np.array([drug_ix[n] for n in names])
    unknown = [n for n in names if n not in mic_ix and n not in drug_ix]
    if unknown:
        raise DataError(f"unknown node name(s): {', '.join(map(str, unknown))}")
    raise DataError("targets mix drugs and microbes")


def aggregate_rankings(scores: np.ndarray, top_k: int = 20, top_fraction: float = 0.25) -> list[tuple[int, int, float]]:
    """Frequency aggregation of per-target top-k lists.

    ``scores`` is (targets, candidates). Returns (candidate, frequency,
    mean score over all targets) for the top ``top_fraction`` of candidates
    that appear in at least one list, ordered by frequency, then mean score,
    then index.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    n_t, n_c = scores.shape
    k = min(top_k, n_c)
    freq = np.zeros(n_c, dtype=np.int64)
    idx = np.arange(n_c)
    for row in scores:
        freq[np.lexsort((idx, -row))[:k]] += 1
    mean = scores.mean(axis=0)
    seen = idx[freq > 0]
    order = seen[np.lexsort((seen, -mean[seen], -freq[seen]))]
    keep = max(1, math.ceil(top_fraction * order.size - 1e-9)) if order.size else 0
    return [(int(c), int(freq[c]), float(mean[c])) for c in order[:keep]]


def rank_candidates(model: DcfaModel, targets, top_k: int = 20, top_fraction: float = 0.25) -> list[RankedCandidate]:
    ds = model.ctx.ds
    side, idx = _resolve(ds, targets)
    mat = model.score_matrix()
    if side == "microbe":
        scores, names = mat[:, idx].T, ds.drug_names
    else:
        scores, names = mat[idx, :], ds.microbe_names
    return [RankedCandidate(c, names[c], f, m) for c, f, m in aggregate_rankings(scores, top_k, top_fraction)]


def write_ranking(ranked: list[RankedCandidate], path) -> None:
    lines = ["candidate\tfrequency\tmeanScore"]
    lines += [f"{r.name}\t{r.frequency}\t{r.mean_score!r}" for r in ranked]
    Path(path).write_text("\n".join(lines) + "\n")
