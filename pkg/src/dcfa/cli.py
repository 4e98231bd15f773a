"""Command-line entry point: ``dcfa {train,evaluate,coldstart,ablate,rank,gradcheck,synth}``.

Every artifact-producing command writes ``manifest.json`` next to its
outputs. Failures exit with 1 (config), 2 (data) or 3 (numerical) and print
one ``error kind=... reason=...`` line on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import platform
import re
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .config import SCENARIOS, ConfigError, TrainConfig, apply_scenario, dump_config, load_config
from .data import (
    DataError,
    Dataset,
    load_dataset,
    toy_paths,
    training_similarity,
    warm_split,
    write_split,
)
from .evaluation import MetricsReport, evaluate, rank_candidates, run_cold_start, write_ranking
from .synth import BlockModelSpec, file_digest, generate, write_synthetic
from .trainer import (
    NumericalError,
    fit_model,
    gradcheck_instance,
    load_checkpoint,
    run_gradcheck,
    save_checkpoint,
    write_log,
)

log = logging.getLogger("dcfa")

ABLATION_DEFAULT = ["full", "-Trans", "-GNN", "Attention", "GCN", "-drug", "-micro",
                    "-drug microbe", "close", "fusion:add", "fusion:multiply",
                    "fusion:concatDim", "fusion:cross"]

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class GradCheckFailed(NumericalError):
    pass


# ------------------------------------------------------------------ parsing


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("data")
    g.add_argument("--data-assoc", help="association matrix (TSV/CSV); bundled toy set if omitted")
    g.add_argument("--data-drug-sim", help="drug similarity matrix; Gaussian profile kernel if omitted")
    g.add_argument("--data-microbe-sim", help="microbe similarity matrix; Gaussian profile kernel if omitted")
    g = p.add_argument_group("configuration (flags override --config)")
    g.add_argument("--config", help="flat TOML file")
    g.add_argument("--seed", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--dropout", type=float)
    g.add_argument("--beta1", type=float)
    g.add_argument("--beta2", type=float)
    g.add_argument("--gamma", type=float)
    g.add_argument("--knn", type=int)
    g.add_argument("--dim", type=int)
    g.add_argument("--heads", type=int)
    g.add_argument("--blocks", type=int)
    g.add_argument("--sample-size", type=int)
    g.add_argument("--fusion")
    g.add_argument("--sum-reduction", action="store_const", const=True)
    g.add_argument("--no-residual", action="store_const", const=True)
    g.add_argument("--test-negatives", choices=("balanced", "all"))
    g.add_argument("--gradcheck", action="store_true", help="run the finite-difference pre-flight first")
    p.add_argument("--out", default="dcfa_out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="dcfa", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"dcfa {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="train on a warm split and save a checkpoint")

    p = sub.add_parser("evaluate", parents=[common], help="metrics of a checkpoint on its held-out split")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("coldstart", parents=[common], help="cold-start study for drugs and/or microbes")
    p.add_argument("--side", choices=("drug", "microbe", "both"), default="both")
    p.add_argument("--fractions", type=_floats, default=[0.02, 0.04])
    p.add_argument("--seeds", type=_ints, default=None, help="comma list; default: --seed")

    p = sub.add_parser("ablate", parents=[common], help="train and evaluate ablation scenarios")
    p.add_argument("--scenario", action="append",
                   help=f"repeatable; one of {sorted(SCENARIOS)} (default: all). "
                        "Write --scenario=-Trans for labels starting with '-'")
    p.add_argument("--seeds", type=_ints, default=None)

    p = sub.add_parser("rank", parents=[common], help="rank candidate partners for target nodes")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--targets", required=True, help="comma-separated node names (all drugs or all microbes)")
    p.add_argument("--top-k", type=int, default=20)
    p.add_argument("--top-fraction", type=float, default=0.25)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check on a <= 10-node instance")
    p.add_argument("--inits", type=int, default=3)

    p = sub.add_parser("synth", help="write a stochastic block-model dataset")
    p.add_argument("--n-drugs", type=int, default=60)
    p.add_argument("--n-microbes", type=int, default=30)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--p-in", type=float, default=0.6)
    p.add_argument("--p-out", type=float, default=0.02)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="dcfa_synth")
    p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _normalise_argv(argv: list[str]) -> list[str]:
    # "--scenario -Trans" would otherwise parse "-Trans" as an option
    out, it = [], iter(argv)
    for a in it:
        if a == "--scenario":
            out.append(f"--scenario={next(it, '')}")
        else:
            out.append(a)
    return out


# ---------------------------------------------------------------- helpers


def resolve_config(args) -> TrainConfig:
    overrides = {
        "seed": args.seed, "epochs": args.epochs, "lr": args.lr, "dropout": args.dropout,
        "beta1": args.beta1, "beta2": args.beta2, "gamma": args.gamma, "knn": args.knn,
        "dim": args.dim, "heads": args.heads, "blocks": args.blocks,
        "sample_size": args.sample_size, "fusion": args.fusion,
        "sum_reduction": args.sum_reduction,
        "residual": False if args.no_residual else None,
        "test_negatives": args.test_negatives,
    }
    return load_config(args.config, overrides)


class DataBundle:
    def __init__(self, args):
        if args.data_assoc is None:
            if args.data_drug_sim or args.data_microbe_sim:
                raise ConfigError("similarity files given without --data-assoc")
            self.paths = dict(zip(("associations", "drug_sim", "microbe_sim"), map(str, toy_paths())))
        else:
            self.paths = {"associations": args.data_assoc, "drug_sim": args.data_drug_sim,
                          "microbe_sim": args.data_microbe_sim}
        self.ds = load_dataset(self.paths["associations"], self.paths["drug_sim"], self.paths["microbe_sim"])
        self.drug_fallback = self.paths["drug_sim"] is None
        self.microbe_fallback = self.paths["microbe_sim"] is None

    def for_plan(self, plan) -> Dataset:
        if self.drug_fallback or self.microbe_fallback:
            return training_similarity(self.ds, plan, self.drug_fallback, self.microbe_fallback)
        return self.ds

    def digests(self) -> dict:
        return {k: {"path": v, "sha256": file_digest(v)} for k, v in self.paths.items() if v is not None}


def deviations(cfg: TrainConfig, data: DataBundle | None = None) -> list[str]:
    """Choices not fixed by the method description, recorded for every run."""
    out = [
        f"optimizer={cfg.optimizer}", "init=glorot_uniform",
        f"dim={cfg.dim}", f"heads={cfg.heads}", f"blocks={cfg.blocks}",
        f"sample_size={cfg.sample_size}", f"gamma={cfg.gamma}", f"gcn_layers={cfg.gcn_layers}",
        "bce=stable_logits_with_log_one_minus_sigmoid",
        "pos_weight=class_ratio" if cfg.pos_weight <= 0 else f"pos_weight={cfg.pos_weight}",
        "reduction=sum" if cfg.sum_reduction else "reduction=mean",
        f"test_negatives={cfg.test_negatives}",
        "message=mean combine=concat",
    ]
    if cfg.residual:
        out.append("transformer_residual_layernorm")
    if cfg.soft_bias:
        out.append("sample_score_soft_attention_bias")
    if data is not None:
        if data.drug_fallback:
            out.append("drug_similarity=gaussian_profile_of_training_pairs")
        if data.microbe_fallback:
            out.append("microbe_similarity=gaussian_profile_of_training_pairs")
        if cfg.knn > min(data.ds.n_drugs, data.ds.n_microbes) - 1:
            out.append("knn_clamped_to_n_minus_1")
        if cfg.sample_size > data.ds.n_drugs + data.ds.n_microbes - 1:
            out.append("sample_size_clamped_to_n_minus_1")
    return out


def write_manifest(out: Path, command: str, argv: list[str], started: float, cfg: TrainConfig | None = None,
                   data: DataBundle | None = None, extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "argv": argv,
        "version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "config": cfg.to_dict() if cfg else None,
        "seed": cfg.seed if cfg else None,
        "data": data.digests() if data else {},
        "deviations": deviations(cfg, data) if cfg else [],
        "outputs": {p.name: file_digest(p) for p in sorted(out.iterdir())
                    if p.is_file() and p.name != "manifest.json"},
        "started_utc": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
        "host": {"platform": platform.platform(), "python": platform.python_version(),
                 "numpy": np.__version__, "machine": platform.machine(), "node": platform.node()},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(scenario: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", scenario).strip("_") or "full"


def _preflight(data: DataBundle, cfg: TrainConfig) -> None:
    rep = run_gradcheck(gradcheck_instance(data.ds), cfg, cfg.seed)
    if not rep.passed:
        worst = max(rep.entries, key=lambda e: e.rel_error)
        raise GradCheckFailed(f"gradcheck max_rel_error={rep.max_rel_error:.3e} at {worst.param}{list(worst.index)}")
    log.info("gradcheck ok: max rel error %.2e over %d entries", rep.max_rel_error, len(rep.entries))


def _progress(every: int = 100):
    def cb(rec):
        if rec.epoch % every == 0:
            log.info("epoch %d  L_total %.6f", rec.epoch, rec.total)
    return cb


def _train_warm(data: DataBundle, cfg: TrainConfig):
    plan = warm_split(data.ds, cfg.test_fraction, cfg.seed, cfg.test_negatives)
    ds = data.for_plan(plan)
    return plan, fit_model(ds, plan, cfg, on_epoch=_progress())


# ---------------------------------------------------------------- commands


def cmd_train(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    data = DataBundle(args)
    out = _out_dir(args)
    if args.gradcheck:
        _preflight(data, cfg)
    plan, state = _train_warm(data, cfg)
    save_checkpoint(state, out / "checkpoint.npz")
    write_log(state.history, out / "train_log.tsv")
    write_split(plan, out / "split.tsv")
    (out / "config.toml").write_text(dump_config(cfg))
    report = MetricsReport([evaluate(state.model, plan, tag=f"seed={cfg.seed}")],
                           protocol=f"warm split, {cfg.test_negatives} test negatives", label="train")
    report.write(out)
    write_manifest(out, "train", argv, started, cfg, data)
    print(report.to_table())
    return 0


def _load_ckpt(path, data: DataBundle):
    if not Path(path).is_file():
        raise DataError(f"file not found: {path}")
    try:
        state = load_checkpoint(path, data.ds)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from None
    if data.drug_fallback or data.microbe_fallback:
        state = load_checkpoint(path, data.for_plan(state.model.ctx.plan))
    return state


def cmd_evaluate(args, argv) -> int:
    started = time.time()
    data = DataBundle(args)
    out = _out_dir(args)
    state = _load_ckpt(args.checkpoint, data)
    cfg = state.cfg
    plan = state.model.ctx.plan
    report = MetricsReport([evaluate(state.model, plan, tag=f"epoch={state.epoch}")],
                           protocol=f"{plan.mode} split, stored test negatives", label="evaluate")
    report.write(out)
    write_manifest(out, "evaluate", argv, started, cfg, data,
                   {"checkpoint": {"path": args.checkpoint, "sha256": file_digest(args.checkpoint)}})
    print(report.to_table())
    return 0


def cmd_coldstart(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    data = DataBundle(args)
    out = _out_dir(args)
    if args.gradcheck:
        _preflight(data, cfg)
    seeds = args.seeds if args.seeds is not None else [cfg.seed]
    sides = ("drug", "microbe") if args.side == "both" else (args.side,)
    for side in sides:
        report = run_cold_start(data.ds, cfg, side, args.fractions, seeds, prepare=data.for_plan)
        report.write(out, f"metrics_coldstart_{side}")
        print(report.to_table())
    write_manifest(out, "coldstart", argv, started, cfg, data,
                   {"fractions": args.fractions, "seeds": seeds, "sides": list(sides)})
    return 0


def cmd_ablate(args, argv) -> int:
    started = time.time()
    base = resolve_config(args)
    data = DataBundle(args)
    out = _out_dir(args)
    scenarios = args.scenario or ABLATION_DEFAULT
    configs = {s: apply_scenario(base, s) for s in scenarios}  # validate all before training
    if args.gradcheck:
        _preflight(data, base)
    seeds = args.seeds if args.seeds is not None else [base.seed]
    rows = ["scenario\truns\tauroc_mean\tauroc_std\taupr_mean\taupr_std\tf1_mean\tf1_std"]
    for scen in sorted(configs):
        report = MetricsReport(protocol=f"warm split, {base.test_negatives} test negatives", label=scen)
        for seed in seeds:
            cfg = configs[scen].replace(seed=seed)
            plan, state = _train_warm(data, cfg)
            report.runs.append(evaluate(state.model, plan, tag=f"seed={seed}"))
        report.write(out, f"metrics_{_slug(scen)}")
        s = report.summary()
        rows.append("\t".join([scen, str(report.seed_count)] +
                              [f"{v!r}" for k in ("auroc", "aupr", "f1") for v in s[k]]))
        print(report.to_table())
    (out / "ablation.tsv").write_text("\n".join(rows) + "\n")
    write_manifest(out, "ablate", argv, started, base, data,
                   {"scenarios": sorted(configs), "seeds": seeds})
    return 0


def cmd_rank(args, argv) -> int:
    started = time.time()
    data = DataBundle(args)
    out = _out_dir(args)
    state = _load_ckpt(args.checkpoint, data)
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    if args.top_k < 1 or not 0 < args.top_fraction <= 1:
        raise ConfigError("--top-k must be >= 1 and --top-fraction in (0, 1]")
    ranked = rank_candidates(state.model, targets, args.top_k, args.top_fraction)
    write_ranking(ranked, out / "ranking.tsv")
    write_manifest(out, "rank", argv, started, state.cfg, data,
                   {"targets": targets, "top_k": args.top_k, "top_fraction": args.top_fraction,
                    "checkpoint": {"path": args.checkpoint, "sha256": file_digest(args.checkpoint)}})
    print((out / "ranking.tsv").read_text(), end="")
    return 0


def cmd_gradcheck(args, argv) -> int:
    started = time.time()
    cfg = resolve_config(args)
    data = DataBundle(args)
    out = _out_dir(args)
    inst = gradcheck_instance(data.ds)
    lines = ["init\tparam\tindex\tanalytic\tnumeric\trel_error"]
    worst, passed = 0.0, True
    for init in range(cfg.seed, cfg.seed + args.inits):
        rep = run_gradcheck(inst, cfg, init)
        worst = max(worst, rep.max_rel_error)
        passed = passed and rep.passed
        for e in rep.entries:
            idx = ",".join(str(int(i)) for i in e.index)
            lines.append(f"{init}\t{e.param}\t{idx}\t{e.analytic!r}\t{e.numeric!r}\t{e.rel_error!r}")
        print(f"init={init} entries={len(rep.entries)} max_rel_error={rep.max_rel_error:.3e} "
              f"passed={rep.passed}")
    (out / "gradcheck.tsv").write_text("\n".join(lines) + "\n")
    write_manifest(out, "gradcheck", argv, started, cfg, data,
                   {"gradcheck": {"passed": passed, "max_rel_error": worst, "inits": args.inits,
                                  "instance": [inst.n_drugs, inst.n_microbes]}})
    if not passed:
        raise GradCheckFailed(f"gradcheck max_rel_error={worst:.3e}")
    return 0


def cmd_synth(args, argv) -> int:
    started = time.time()
    spec = BlockModelSpec(args.n_drugs, args.n_microbes, args.communities, args.p_in, args.p_out, args.sigma)
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _out_dir(args)
    paths = write_synthetic(generate(spec, args.seed), out)
    write_manifest(out, "synth", argv, started, extra={
        "seed": args.seed, "spec": spec.__dict__,
        "files": {k: {"name": p.name, "sha256": file_digest(p)} for k, p in paths.items()},
    })
    for k, p in paths.items():
        print(f"{k}\t{p}\t{file_digest(p)}")
    return 0


COMMANDS = {
    "train": cmd_train, "evaluate": cmd_evaluate, "coldstart": cmd_coldstart, "ablate": cmd_ablate,
    "rank": cmd_rank, "gradcheck": cmd_gradcheck, "synth": cmd_synth,
}


def _fail(code: int, kind: str, exc: BaseException) -> int:
    reason = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error kind={kind} code={code} reason={json.dumps(reason)}", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(_normalise_argv(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args, argv)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except DataError as exc:
        return _fail(EXIT_DATA, "data", exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERIC, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
