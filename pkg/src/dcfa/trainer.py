"""Full-batch training loop, optimisers and checkpoints."""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics as nx
from .config import TrainConfig
from .data import DataError, Dataset, SplitPlan, make_dataset, warm_split
from .model import DcfaModel, ModelContext

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class NumericalError(RuntimeError):
    pass


@dataclass
class EpochLosses:
    epoch: int
    rel: float
    adv_drug: float
    adv_microbe: float
    total: float

    def tsv(self) -> str:
        return f"{self.epoch}\t{self.rel!r}\t{self.adv_drug!r}\t{self.adv_microbe!r}\t{self.total!r}"


class Adam:
    def __init__(self, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, nx.Tensor], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.data = p.data - (self.lr / c1) * m / denom

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load(self, st: dict) -> None:
        self.t, self.m, self.v = st["t"], st["m"], st["v"]


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        for k, p in params.items():
            p.data = p.data - self.lr * grads[k]

    def state(self) -> dict:
        return {"t": self.t, "m": {}, "v": {}}

    def load(self, st: dict) -> None:
        self.t = st["t"]


def make_optimizer(cfg: TrainConfig):
    return Adam(cfg.lr) if cfg.optimizer == "adam" else Sgd(cfg.lr)


@dataclass
class TrainState:
    model: DcfaModel
    optimizer: Adam | Sgd
    rng: np.random.Generator
    epoch: int = 0
    history: list[EpochLosses] = field(default_factory=list)

    @property
    def cfg(self) -> TrainConfig:
        return self.model.ctx.cfg


def init_state(ds: Dataset, plan: SplitPlan, cfg: TrainConfig) -> TrainState:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    model = DcfaModel(ModelContext.build(ds, plan, cfg), rng)
    return TrainState(model, make_optimizer(cfg), rng)


def train_epoch(state: TrainState) -> EpochLosses:
    """One full-batch step on the total loss; losses are reported pre-update."""
    model = state.model
    # overflow is detected explicitly below, so numpy's warnings are redundant
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        with nx.Tape() as tape:
            fr = model.forward(training=True, rng=state.rng)
            losses = model.losses(fr)
        values = losses.values()
        if not np.all(np.isfinite(values)):
            bad = tape.first_nonfinite()
            where = f"{bad[0]} output of shape {bad[1].shape}" if bad else "loss"
            raise NumericalError(f"non-finite value at epoch {state.epoch + 1}: first in {where}")
        grads = tape.gradient(losses.total, model.params)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient at epoch {state.epoch + 1} for {name}")
    with np.errstate(over="ignore", invalid="ignore"):
        # a diverging step surfaces as a non-finite loss at the next epoch
        state.optimizer.step(model.params, grads)
    model.samples = fr.next_samples
    state.epoch += 1
    rec = EpochLosses(state.epoch, *values)
    state.history.append(rec)
    return rec


def fit_model(ds: Dataset, plan: SplitPlan, cfg: TrainConfig,
              on_epoch: Callable[[EpochLosses], None] | None = None,
              state: TrainState | None = None) -> TrainState:
    """Train for ``cfg.epochs`` epochs (continuing ``state`` if given)."""
    state = state or init_state(ds, plan, cfg)
    while state.epoch < cfg.epochs:
        rec = train_epoch(state)
        if on_epoch is not None:
            on_epoch(rec)
    return state


def write_log(history: list[EpochLosses], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch\tL_rel\tL_adv_drug\tL_adv_microbe\tL_total\n")
        for rec in history:
            fh.write(rec.tsv() + "\n")


# --------------------------------------------------------------- checkpoints


def save_checkpoint(state: TrainState, path) -> None:
    """npz container: arrays keyed by role, plus a JSON ``__meta__`` header."""
    model = state.model
    plan = model.ctx.plan
    arrays = {f"param/{k}": t.data for k, t in model.params.items()}
    opt = state.optimizer.state()
    arrays.update({f"adam_m/{k}": v for k, v in opt["m"].items()})
    arrays.update({f"adam_v/{k}": v for k, v in opt["v"].items()})
    arrays["samples"] = model.samples
    for key in ("train_pos", "test_pos", "train_neg", "test_neg"):
        arrays[f"plan/{key}"] = getattr(plan, key)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "optimizer_t": opt["t"],
        "config": state.cfg.to_dict(),
        "rng_state": state.rng.bit_generator.state,
        "shapes": {k: list(t.shape) for k, t in model.params.items()},
        "plan": {"mode": plan.mode, "seed": plan.seed, "held_out": list(plan.held_out),
                 "degenerate": plan.degenerate},
        "history": [[r.epoch, r.rel, r.adv_drug, r.adv_microbe, r.total] for r in state.history],
    }
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(arrays.pop("__meta__").tobytes().decode())
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
    return meta, arrays


def load_checkpoint(path, ds: Dataset) -> TrainState:
    """Rebuild a :class:`TrainState` that continues bit-exactly."""
    meta, arrays = read_checkpoint(path)
    cfg = TrainConfig(**meta["config"]).validate()
    pm = meta["plan"]
    plan = SplitPlan(arrays["plan/train_pos"], arrays["plan/test_pos"], arrays["plan/train_neg"],
                     arrays["plan/test_neg"], pm["mode"], pm["seed"], tuple(pm["held_out"]), pm["degenerate"])
    state = init_state(ds, plan, cfg)
    model = state.model
    for k, t in model.params.items():
        saved = arrays[f"param/{k}"]
        if saved.shape != t.shape:
            raise ValueError(f"checkpoint shape mismatch for {k}: {saved.shape} vs {t.shape}")
        t.data = saved.copy()
    model.samples = arrays["samples"].copy()
    state.optimizer.load({
        "t": meta["optimizer_t"],
        "m": {k[len("adam_m/"):]: v.copy() for k, v in arrays.items() if k.startswith("adam_m/")},
        "v": {k[len("adam_v/"):]: v.copy() for k, v in arrays.items() if k.startswith("adam_v/")},
    })
    state.rng.bit_generator.state = meta["rng_state"]
    state.epoch = meta["epoch"]
    state.history = [EpochLosses(int(e), *r) for e, *r in meta["history"]]
    return state


# ------------------------------------------------------------ gradient check


def gradcheck_instance(ds: Dataset, n_drugs: int = 6, n_microbes: int = 4) -> Dataset:
    """Sub-dataset of the highest-degree drugs and microbes (ties by index)."""
    a = ds.associations
    di = np.sort(np.argsort(-a.sum(axis=1), kind="stable")[:n_drugs])
    mi = np.sort(np.argsort(-a.sum(axis=0), kind="stable")[:n_microbes])
    sub = a[np.ix_(di, mi)]
    if sub.sum() < 2:
        raise DataError("gradient-check instance needs at least 2 associations")
    return make_dataset(sub, ds.drug_sim[np.ix_(di, di)], ds.microbe_sim[np.ix_(mi, mi)],
                        [ds.drug_names[i] for i in di], [ds.microbe_names[j] for j in mi])


def run_gradcheck(ds: Dataset, cfg: TrainConfig, init_seed: int = 0, eps: float = 1e-5,
                  samples: int = 50, tol: float = 1e-4, **relax) -> nx.GradCheckReport:
    """Finite-difference check of the full training loss at one initialisation.

    Sample sets are frozen to the schedule of an initial forward pass and the
    dropout masks are redrawn from the same seed at every evaluation, so the
    loss is a smooth function of the parameters away from ReLU kinks.
    ``relax`` passes ``atol``/``kink_tol`` through to :func:`grad_check`.
    """
    cfg = cfg.replace(seed=init_seed)
    plan = warm_split(ds, cfg.test_fraction, init_seed)
    model = DcfaModel(ModelContext.build(ds, plan, cfg), np.random.default_rng(init_seed))
    schedule = model.forward().schedule

    def loss():
        fr = model.forward(training=True, rng=np.random.default_rng(init_seed + 1), schedule=schedule)
        return model.losses(fr).total

    return nx.grad_check(loss, model.params, eps=eps, samples=samples, tol=tol, seed=init_seed, **relax)
