"""Dense and partial-norm tests calibrated for sub-Gaussian noise.

The Berk-Jones test needs the exact noise distribution and is not available
here.  Thresholds carry the factor ``L^2 / sigma^2`` and two tuning constants
whose numerical values are not pinned down by theory; both default to 4 and
can be re-fitted with :mod:`mscpd.calibration`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .gaussian import (
    CalibrationTable,
    ScaleCalibration,
    TestVerdict,
    _cusum_at,
    _dense,
    _partial,
    sparsity_levels,
)
from .grid import Grid, GridPoint, build_complete_grid
from .stats import TimeSeries

__all__ = [
    "GAUSSIAN_PSI2",
    "RADEMACHER_PSI2",
    "SubGaussianTestConfig",
    "sg_dense_threshold_value",
    "sg_partial_threshold_value",
    "sg_dense_threshold",
    "sg_partial_threshold",
    "sg_dense_test",
    "sg_partial_test",
    "sg_combined_test",
]

# psi_2 norms per unit standard deviation
GAUSSIAN_PSI2 = math.sqrt(8.0 / 3.0)
RADEMACHER_PSI2 = 1.0 / math.sqrt(math.log(2.0))

_GAUSS_TOL = 1e-9


def sg_dense_threshold_value(n, p, r, delta, L, sigma, c_dense) -> float:
    lg = math.log(n / (r * delta))
    return c_dense * (L * L) / (sigma * sigma) * (math.sqrt(p * lg) + lg)


def sg_partial_threshold_value(n, p, r, delta, s, L, sigma, c_partial) -> float:
    return s + c_partial * (L * L) / (sigma * sigma) * (
        s * math.log(2.0 * math.e * p / s) + math.log(n / (r * delta))
    )


@dataclass(frozen=True)
class SubGaussianTestConfig:
    """L-sub-Gaussian noise with known variance; complete grid by default.

    ``L`` defaults to the psi_2 norm of ``N(0, sigma^2)``.  Set
    ``gaussian_noise=True`` to assert that ``L`` is at least that large.
    """

    n: int
    p: int
    sigma: float = 1.0
    delta: float = 0.1
    L: float | None = None
    c_dense: float = 4.0
    c_partial: float = 4.0
    grid: Grid | None = None
    gaussian_noise: bool = False

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise InvalidInputError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        if not self.sigma > 0:
            raise InvalidInputError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        if self.L is None:
            object.__setattr__(self, "L", self.sigma * GAUSSIAN_PSI2)
        if not self.L > 0:
            raise InvalidInputError(f"L must be positive, got {self.L}")
        if not (self.c_dense > 0 and self.c_partial > 0):
            raise InvalidInputError("tuning constants must be positive")
        if self.gaussian_noise and self.L**2 < (8.0 / 3.0) * self.sigma**2 * (1.0 - _GAUSS_TOL):
            raise InvalidInputError(
                f"L={self.L} is below the psi_2 norm of N(0, sigma^2) ({self.sigma * GAUSSIAN_PSI2})"
            )
        if self.grid is None:
            object.__setattr__(self, "grid", build_complete_grid(self.n))
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
        sizes = tuple(self.sizes)
        for r in self.grid.scales:
            scales[r] = ScaleCalibration(
                r=r,
                n_locations=len(self.grid.locations(r)),
                dense_threshold=sg_dense_threshold(self, r),
                x0=0,
                quantiles=(),
                sizes=sizes,
                partial_thresholds=tuple(sg_partial_threshold(self, r, s) for s in sizes),
            )
        params = {
            "n": self.n, "p": self.p, "sigma": self.sigma, "delta": self.delta,
            "grid": self.grid.kind,
            "subgaussian": {"L": self.L, "c_dense": self.c_dense, "c_partial": self.c_partial},
        }
        return CalibrationTable("subgaussian", params, scales)

    def kernel_args(self, r: int):
        cal = self.table[r]
        return (
            cal.dense_threshold,
            True,
            np.zeros(0, dtype=np.int64),
            np.asarray(cal.sizes, dtype=np.int64),
            np.asarray(cal.partial_thresholds, dtype=np.float64),
        )


def sg_dense_threshold(cfg: SubGaussianTestConfig, r: int) -> float:
    cfg._check_scale(r)
    return sg_dense_threshold_value(cfg.n, cfg.p, r, cfg.delta, cfg.L, cfg.sigma, cfg.c_dense)


def sg_partial_threshold(cfg: SubGaussianTestConfig, r: int, s: int) -> float:
    cfg._check_scale(r)
    if s not in cfg.sizes:
        raise InvalidInputError(f"sparsity {s} is not a power of two <= p={cfg.p}")
    return sg_partial_threshold_value(
        cfg.n, cfg.p, r, cfg.delta, s, cfg.L, cfg.sigma, cfg.c_partial
    )


def sg_dense_test(series: TimeSeries, point: GridPoint, cfg: SubGaussianTestConfig) -> TestVerdict:
    l, r = point
    cfg._check_scale(r)
    return _dense(_cusum_at(series, point, cfg), cfg.table[r].dense_threshold)


def sg_partial_test(series: TimeSeries, point: GridPoint, cfg: SubGaussianTestConfig) -> TestVerdict:
    l, r = point
    cfg._check_scale(r)
    cal = cfg.table[r]
    return _partial(_cusum_at(series, point, cfg), cal.sizes, cal.partial_thresholds)


def sg_combined_test(series: TimeSeries, point: GridPoint, cfg: SubGaussianTestConfig) -> TestVerdict:
    """Dense, then partial norm; first firing sub-test wins."""
    l, r = point
    cfg._check_scale(r)
    cal = cfg.table[r]
    c = _cusum_at(series, point, cfg)
    first = _dense(c, cal.dense_threshold)
    if first.fired:
        return first
    verdict = _partial(c, cal.sizes, cal.partial_thresholds)
    return verdict if verdict.fired else first
