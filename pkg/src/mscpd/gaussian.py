"""Calibrated local homogeneity tests for Gaussian noise.

Three tests are run at each grid point ``(l, r)`` on the CUSUM vector ``C``:

* dense: ``||C||^2 - p`` against ``4 (sqrt(p L2) + L2)`` with
  ``L2 = log(2n / (r delta))``;
* Berk-Jones: the counts ``N_x = #{i : |C_i| > x}`` against exact binomial
  quantiles at levels ``alpha_{x,r} = 6 delta r / (pi^2 x^2 |D_r| n)``;
* partial norm: the sum of the ``s`` largest ``C_i^2`` for ``s`` in
  ``{1, 2, 4, ...}`` against ``4 s log(2ep/s) + 4 log(n / (r delta))``.

Their disjunction is the combined test.  Every threshold is location
independent, so a :class:`CalibrationTable` is built once per configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .grid import Grid, GridPoint, build_dyadic_grid
from .stats import (
    BinomialSpec,
    TimeSeries,
    binom_inverse_tail,
    cusum,
    dense_stat,
    exceed_counts,
    gauss_upper_tail,
    partial_norms,
)

__all__ = [
    "GaussianTestConfig",
    "TestVerdict",
    "ScaleCalibration",
    "CalibrationTable",
    "sparsity_levels",
    "dense_threshold_value",
    "partial_threshold_value",
    "dense_threshold",
    "berk_jones_weight",
    "berk_jones_xmax",
    "berk_jones_quantile",
    "partial_threshold",
    "dense_test",
    "berk_jones_test",
    "partial_test",
    "combined_test",
]

_XMAX_SCAN = 10_000


def sparsity_levels(p: int) -> list[int]:
    """Dyadic sparsity set ``{1, 2, 4, ..., 2**floor(log2 p)}``."""
    if p < 1:
        raise InvalidInputError(f"dimension must be positive, got {p}")
    return [1 << e for e in range(p.bit_length())]


def dense_threshold_value(n: int, p: int, r: int, delta: float) -> float:
    """``4 (sqrt(p log(2n/(r delta))) + log(2n/(r delta)))``."""
    lg = math.log(2.0 * n / (r * delta))
    return 4.0 * (math.sqrt(p * lg) + lg)


def partial_threshold_value(n: int, p: int, r: int, delta: float, s: int) -> float:
    """``4 s log(2ep/s) + 4 log(n/(r delta))``."""
    return 4.0 * s * math.log(2.0 * math.e * p / s) + 4.0 * math.log(n / (r * delta))


@dataclass(frozen=True)
class TestVerdict:
    """Outcome of a local test; ``source`` names the sub-test that fired."""

    __test__ = False  # not a pytest class

    fired: bool
    source: str | None
    statistic_value: float
    threshold: float


@dataclass(frozen=True)
class ScaleCalibration:
    r: int
    n_locations: int
    dense_threshold: float
    x0: int
    quantiles: tuple[int, ...]  # entry x - 1 is the quantile for count threshold x
    sizes: tuple[int, ...]
    partial_thresholds: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "n_locations": self.n_locations,
            "dense_threshold": self.dense_threshold,
            "x0": self.x0,
            "quantiles": [[x + 1, q] for x, q in enumerate(self.quantiles)],
            "partial_thresholds": [[s, t] for s, t in zip(self.sizes, self.partial_thresholds)],
        }


@dataclass(frozen=True)
class CalibrationTable:
    """Per-scale thresholds shared by every location at that scale."""

    kind: str
    params: dict
    scales: dict[int, ScaleCalibration] = field(repr=False)

    def __getitem__(self, r: int) -> ScaleCalibration:
        return self.scales[r]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            **self.params,
            "scales": [self.scales[r].to_dict() for r in sorted(self.scales)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass(frozen=True)
class GaussianTestConfig:
    """Known-variance Gaussian setting; the dyadic grid is used by default."""

    n: int
    p: int
    sigma: float = 1.0
    delta: float = 0.1
    grid: Grid | None = None

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise InvalidInputError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.grid is None:
            object.__setattr__(self, "grid", build_dyadic_grid(self.n))
        elif self.grid.n != self.n:
            raise InvalidInputError(f"grid is built for n={self.grid.n}, config has n={self.n}")

    @property
    def sizes(self) -> list[int]:
        return sparsity_levels(self.p)

    def _check_scale(self, r: int) -> int:
        if r not in self.grid.scales:
            raise InvalidInputError(f"scale {r} is not in the grid")
        return len(self.grid.locations(r))

    @cached_property
    def table(self) -> CalibrationTable:
        scales = {}
        for r in self.grid.scales:
            x0 = berk_jones_xmax(self, r)
            quants = tuple(berk_jones_quantile(self, x, r) for x in range(1, x0 + 1))
            sizes = tuple(self.sizes)
            scales[r] = ScaleCalibration(
                r=r,
                n_locations=len(self.grid.locations(r)),
                dense_threshold=dense_threshold(self, r),
                x0=x0,
                quantiles=quants,
                sizes=sizes,
                partial_thresholds=tuple(partial_threshold(self, r, s) for s in sizes),
            )
        params = {"n": self.n, "p": self.p, "sigma": self.sigma, "delta": self.delta,
                  "grid": self.grid.kind}
        return CalibrationTable("gaussian", params, scales)

    def kernel_args(self, r: int):
        """Threshold arrays consumed by :func:`mscpd.kernels.evaluate_scale`."""
        cal = self.table[r]
        return (
            cal.dense_threshold,
            True,
            np.asarray(cal.quantiles, dtype=np.int64),
            np.asarray(cal.sizes, dtype=np.int64),
            np.asarray(cal.partial_thresholds, dtype=np.float64),
        )


def dense_threshold(cfg: GaussianTestConfig, r: int) -> float:
    cfg._check_scale(r)
    return dense_threshold_value(cfg.n, cfg.p, r, cfg.delta)


def berk_jones_weight(cfg: GaussianTestConfig, x: int, r: int) -> float:
    """Level ``alpha_{x,r}`` allotted to the count statistic ``N_x`` at scale ``r``."""
    if x < 1:
        raise InvalidInputError(f"x must be a positive integer, got {x}")
    n_loc = cfg._check_scale(r)
    return 6.0 * cfg.delta * r / (math.pi**2 * x * x * n_loc * cfg.n)


def berk_jones_xmax(cfg: GaussianTestConfig, r: int) -> int:
    """Smallest ``x >= 1`` with ``2 p Phibar(x) <= alpha_{x,r}``.

    Beyond it every binomial quantile is zero, so larger ``x`` add nothing.
    """
    cfg._check_scale(r)
    for x in range(1, _XMAX_SCAN):
        if 2.0 * cfg.p * gauss_upper_tail(x) <= berk_jones_weight(cfg, x, r):
            return x
    raise RuntimeError("Berk-Jones scan did not terminate")  # pragma: no cover


def berk_jones_quantile(cfg: GaussianTestConfig, x: int, r: int) -> int:
    """``Qbar^{-1}(alpha_{x,r}, p, 2 Phibar(x))``."""
    q0 = min(1.0, 2.0 * gauss_upper_tail(x))
    return binom_inverse_tail(berk_jones_weight(cfg, x, r), BinomialSpec(cfg.p, q0))


def partial_threshold(cfg: GaussianTestConfig, r: int, s: int) -> float:
    cfg._check_scale(r)
    if s not in cfg.sizes:
        raise InvalidInputError(f"sparsity {s} is not a power of two <= p={cfg.p}")
    return partial_threshold_value(cfg.n, cfg.p, r, cfg.delta, s)


def _cusum_at(series: TimeSeries, point, cfg) -> np.ndarray:
    if series.n != cfg.n or series.p != cfg.p:
        raise InvalidInputError(
            f"series is {series.p}x{series.n}, config expects {cfg.p}x{cfg.n}"
        )
    return cusum(series, point, cfg.sigma).values


def _dense(c: np.ndarray, thr: float) -> TestVerdict:
    stat = dense_stat(c)
    return TestVerdict(stat > thr, "dense" if stat > thr else None, stat, thr)


def _berk_jones(c: np.ndarray, quantiles) -> TestVerdict:
    counts = exceed_counts(c, len(quantiles))
    for x, (cnt, q) in enumerate(zip(counts, quantiles), start=1):
        if cnt > q:
            return TestVerdict(True, "berk_jones", float(cnt), float(q))
    return TestVerdict(False, None, float(counts[0]), float(quantiles[0]))


def _partial(c: np.ndarray, sizes, thresholds) -> TestVerdict:
    norms = partial_norms(c)
    for s, t in zip(sizes, thresholds):
        if norms[s - 1] > t:
            return TestVerdict(True, "partial", float(norms[s - 1]), float(t))
    return TestVerdict(False, None, float(norms[sizes[0] - 1]), float(thresholds[0]))


def dense_test(series: TimeSeries, point: GridPoint, cfg: GaussianTestConfig) -> TestVerdict:
    l, r = point
    cfg._check_scale(r)
    return _dense(_cusum_at(series, point, cfg), cfg.table[r].dense_threshold)


def berk_jones_test(series: TimeSeries, point: GridPoint, cfg: GaussianTestConfig) -> TestVerdict:
    l, r = point
    cfg._check_scale(r)
    return _berk_jones(_cusum_at(series, point, cfg), cfg.table[r].quantiles)


def partial_test(series: TimeSeries, point: GridPoint, cfg: GaussianTestConfig) -> TestVerdict:
    l, r = point
    cfg._check_scale(r)
    cal = cfg.table[r]
    return _partial(_cusum_at(series, point, cfg), cal.sizes, cal.partial_thresholds)


def combined_test(series: TimeSeries, point: GridPoint, cfg: GaussianTestConfig) -> TestVerdict:
    """Dense, then Berk-Jones, then partial norm; first firing sub-test wins."""
    l, r = point
    cfg._check_scale(r)
    cal = cfg.table[r]
    c = _cusum_at(series, point, cfg)
    first = _dense(c, cal.dense_threshold)
    if first.fired:
        return first
    verdict = _berk_jones(c, cal.quantiles)
    if verdict.fired:
        return verdict
    verdict = _partial(c, cal.sizes, cal.partial_thresholds)
    if verdict.fired:
        return verdict
    return first
