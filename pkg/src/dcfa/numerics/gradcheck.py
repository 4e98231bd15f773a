"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckEntry:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float
    kink: bool = False  # one-sided slopes disagree: not differentiable here


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)
    tol: float = 1e-4
    atol: float = 0.0

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def failures(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if not e.kink and not self._ok(e)]

    @property
    def kinks(self) -> list[GradCheckEntry]:
        return [e for e in self.entries if e.kink]

    def _ok(self, e: GradCheckEntry) -> bool:
        return e.rel_error < self.tol or abs(e.analytic - e.numeric) < self.atol

    @property
    def passed(self) -> bool:
        return not self.failures

    def per_param(self) -> dict[str, float]:
        out: dict[str, float] = {}
        for e in self.entries:
            out[e.param] = max(out.get(e.param, 0.0), e.rel_error)
        return out


def relative_error(a: float, n: float, floor: float = 1e-7) -> float:
    if not (np.isfinite(a) and np.isfinite(n)):
        return float("inf")
    return abs(a - n) / max(abs(a), abs(n), floor)


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: dict[str, Tensor] | Sequence[Tensor],
    eps: float = 1e-5,
    samples: int = 50,
    tol: float = 1e-4,
    seed: int = 0,
    atol: float = 0.0,
    kink_tol: float | None = None,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must read the current values of ``params`` each call. Up to
    ``samples`` entries per tensor are checked (all of them for small tensors).
    A non-finite loss at a perturbed point yields an infinite relative error
    for that entry.

    Both relaxations are off by default. ``atol`` also accepts entries whose
    absolute error is below it (rounding noise on tiny gradients). With
    ``kink_tol`` set, an entry whose forward and backward one-sided slopes
    differ by more than ``kink_tol`` is marked as a kink and not counted as a
    failure, since no derivative exists there to compare against.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not isinstance(params, dict):
        params = {p.name or f"param{i}": p for i, p in enumerate(params)}
    with Tape() as tape:
        loss = loss_fn()
    grads = tape.gradient(loss, params)
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tol=tol, atol=atol)
    for name, p in params.items():
        size = p.data.size
        picks = np.arange(size) if size <= samples else np.sort(rng.choice(size, samples, replace=False))
        flat = p.data.reshape(-1)
        for k in picks:
            orig = flat[k]
            flat[k] = orig + eps
            up = float(loss_fn().data)
            flat[k] = orig - eps
            down = float(loss_fn().data)
            flat[k] = orig
            numeric = (up - down) / (2 * eps)
            kink = False
            if kink_tol is not None:
                mid = float(loss_fn().data)
                kink = abs((up - mid) - (mid - down)) / eps > kink_tol
            analytic = float(grads[name].reshape(-1)[k])
            report.entries.append(
                GradCheckEntry(name, np.unravel_index(k, p.shape), analytic, numeric,
                               relative_error(analytic, numeric), kink)
            )
    return report
