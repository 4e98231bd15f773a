"""Compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py            # full-data sizes (1546 nodes)
    python benchmarks/bench_kernels.py --quick    # small sizes, a few seconds

Each kernel is timed with ``timeit`` (best of ``--repeat``) on identical
inputs, and the outputs are compared before timing. A final row times one
training epoch with each backend on the planted 60 x 30 dataset.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dcfa._kernels import _fallback

try:
    from dcfa._kernels import _core
except ImportError:
    sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation` first")


def inputs(n: int, d: int, s: int, heads: int, seed: int = 0) -> dict:
    r = np.random.default_rng(seed)
    sim = r.random((n, n))
    sim = (sim + sim.T) / 2
    samples = np.sort(np.stack([r.choice(np.delete(np.arange(n), i), s, replace=False) for i in range(n)]), axis=1)
    deg = r.integers(0, 8, size=n)
    indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    indices = r.integers(0, n, size=int(indptr[-1])).astype(np.int64)
    h = r.normal(size=(n, d))
    q, k, v = (r.normal(size=(n, d)) for _ in range(3))
    return dict(sim=sim, samples=samples.astype(np.int64), indptr=indptr, indices=indices, h=h,
                hu=h @ r.normal(size=(d, d)), q=q, k=k, v=v, bias=r.normal(size=(n, s)),
                gout=r.normal(size=(n, d)), gdot=r.normal(size=(n, s)), heads=heads, scale=1 / np.sqrt(d // heads),
                rows=r.normal(size=(4 * n, d)), idx=r.integers(0, n, size=4 * n).astype(np.int64), n=n)


def calls(mod, x: dict) -> dict:
    _, att = mod.attention_forward(x["q"], x["k"], x["v"], x["bias"], x["samples"], x["heads"], x["scale"])
    return {
        "knn_indices (k=8)": lambda: mod.knn_indices(x["sim"], 8),
        "update_samples": lambda: mod.update_samples(x["hu"], x["h"], x["samples"], x["indptr"], x["indices"]),
        "sampled_dot": lambda: mod.sampled_dot(x["q"], x["k"], x["samples"]),
        "sampled_dot_backward": lambda: mod.sampled_dot_backward(x["gdot"], x["q"], x["k"], x["samples"]),
        "attention_forward": lambda: mod.attention_forward(x["q"], x["k"], x["v"], x["bias"], x["samples"],
                                                           x["heads"], x["scale"]),
        "attention_backward": lambda: mod.attention_backward(x["gout"], x["q"], x["k"], x["v"], att,
                                                             x["samples"], x["scale"]),
        "scatter_add_rows": lambda: mod.scatter_add_rows(x["idx"], x["rows"], x["n"]),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(p, q) for p, q in zip(a, b))
    return np.allclose(a, b, rtol=0, atol=1e-10)


EPOCH = """
import time, numpy as np
from dcfa.synth import BlockModelSpec, generate
from dcfa.data import warm_split
from dcfa.config import TrainConfig
from dcfa.trainer import init_state, train_epoch
ds = generate(BlockModelSpec(), 0).dataset
st = init_state(ds, warm_split(ds, 0.1, 0), TrainConfig(seed=0))
train_epoch(st)
times = []
for _ in range({rep}):
    t0 = time.perf_counter()
    train_epoch(st)
    times.append(time.perf_counter() - t0)
print(min(times))
"""


def epoch_time(pure: bool, repeat: int) -> float:
    env = {**os.environ, "DCFA_PURE_PYTHON": "1" if pure else "0"}
    out = subprocess.run([sys.executable, "-c", EPOCH.format(rep=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    n = 200 if args.quick else 1546
    x = inputs(n, 64, 15, 4)
    fast, slow = calls(_core, x), calls(_fallback, x)
    print(f"nodes={n} d=64 s=15 heads=4, best of {args.repeat}")
    print(f"{'kernel':<24}{'cython ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name in fast:
        assert _same(fast[name](), slow[name]()), f"{name}: backends disagree"
        number = 3
        tc = min(timeit.repeat(fast[name], number=number, repeat=args.repeat)) / number * 1e3
        tp = min(timeit.repeat(slow[name], number=number, repeat=args.repeat)) / number * 1e3
        print(f"{name:<24}{tc:>12.3f}{tp:>12.3f}{tp / tc:>9.1f}x")
    tc, tp = epoch_time(False, args.repeat) * 1e3, epoch_time(True, args.repeat) * 1e3
    print(f"{'train epoch (60x30)':<24}{tc:>12.3f}{tp:>12.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
