"""Evaluate a calibrated test family over its grid and aggregate the result."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from . import kernels
from .aggregation import Segmentation, TestOutcomeMap, aggregate_v1, aggregate_v2
from .errors import InvalidInputError
from .stats import TimeSeries

__all__ = ["resolve_threads", "evaluate_grid", "detect"]


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit value, else ``CPD_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("CPD_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise InvalidInputError(f"CPD_THREADS must be an integer, got {env!r}") from None
        else:
            threads = 1
    if threads < 1:
        raise InvalidInputError(f"thread count must be positive, got {threads}")
    return threads


def evaluate_grid(series: TimeSeries, cfg, *, backend: str | None = None,
                  threads: int | None = None) -> TestOutcomeMap:
    """Run the combined test of ``cfg`` at every grid point.

    ``cfg`` is a :class:`~mscpd.gaussian.GaussianTestConfig` or
    :class:`~mscpd.subgaussian.SubGaussianTestConfig`.  Scales are independent,
    so they are spread over a thread pool; the compiled kernel releases the GIL.
    """
    if series.n != cfg.n or series.p != cfg.p:
        raise InvalidInputError(f"series is {series.p}x{series.n}, config expects {cfg.p}x{cfg.n}")
    grid = cfg.grid
    prefix_tm = series.prefix_tm
    cfg.table  # build thresholds once, outside the workers

    def run(r):
        locs = grid.locations(r)
        return kernels.evaluate_scale(prefix_tm, locs, r, cfg.sigma, *cfg.kernel_args(r),
                                      backend=backend)

    workers = resolve_threads(threads)
    if workers == 1 or len(grid.scales) == 1:
        results = [run(r) for r in grid.scales]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, grid.scales))
    fired = {r: res[0].astype(bool) for r, res in zip(grid.scales, results)}
    sources = {r: res[1] for r, res in zip(grid.scales, results)}
    return TestOutcomeMap(grid, fired, sources)


def detect(series: TimeSeries, cfg, *, algorithm: str = "v1", backend: str | None = None,
           threads: int | None = None) -> Segmentation:
    """Full pipeline: grid evaluation followed by aggregation."""
    outcomes = evaluate_grid(series, cfg, backend=backend, threads=threads)
    if algorithm == "v1":
        return aggregate_v1(outcomes)
    if algorithm == "v2":
        return aggregate_v2(outcomes)
    raise InvalidInputError(f"unknown aggregation {algorithm!r}")

