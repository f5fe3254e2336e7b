"""Compare the compiled and numpy kernel backends on full-grid evaluation.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--threads 1]

Each case evaluates every grid point once per repeat and reports the best
wall-clock time per backend, plus a check that both backends agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mscpd import GaussianTestConfig, SubGaussianTestConfig, build_grid
from mscpd.detect import evaluate_grid
from mscpd.kernels import HAVE_COMPILED
from mscpd.simulation import add_noise

CASES = [
    ("gaussian dyadic", 10_000, 100, "dyadic", "gaussian"),
    ("gaussian complete", 1024, 32, "complete", "gaussian"),
    ("subgaussian complete", 1024, 32, "complete", "subgaussian"),
]


def _config(n, p, grid, family):
    g = build_grid(n, grid)
    if family == "gaussian":
        return GaussianTestConfig(n, p, grid=g)
    return SubGaussianTestConfig(n, p, grid=g)


def _best(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = ["python"] + (["cython"] if HAVE_COMPILED else [])
    print(f"{'case':<22} {'n':>6} {'p':>4} {'points':>8} " + " ".join(f"{b:>9}" for b in backends)
          + "  speedup  agree")
    for name, n, p, grid, family in CASES:
        cfg = _config(n, p, grid, family)
        _ = cfg.table  # calibration is not part of the kernel timing
        series = add_noise(np.zeros((p, n)), "gaussian", 1.0, seed=args.seed)
        _ = series.prefix_tm
        times, fired = {}, {}
        for b in backends:
            t, res = _best(lambda: evaluate_grid(series, cfg, backend=b, threads=args.threads),
                           args.repeat)
            times[b] = t
            fired[b] = res
        agree = all(
            np.array_equal(fired[backends[0]].fired[r], fired[b].fired[r])
            for b in backends for r in cfg.grid.scales
        )
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<22} {n:>6} {p:>4} {len(cfg.grid):>8} "
              + " ".join(f"{times[b]:>8.3f}s" for b in backends)
              + f"  {speed:>6.1f}x  {agree}")


if __name__ == "__main__":
    main()
