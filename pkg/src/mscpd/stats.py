"""CUSUM statistics and the exact distribution functions the tests consume.

All grid statistics are computed from per-coordinate prefix sums, so a CUSUM
vector at any ``(l, r)`` costs ``O(p)`` regardless of ``r``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import InvalidInputError, OutOfRangeError
from .grid import GridPoint, is_valid_point

__all__ = [
    "TimeSeries",
    "CusumVector",
    "BinomialSpec",
    "cusum",
    "cusum_block",
    "dense_stat",
    "partial_norm",
    "partial_norms",
    "exceed_count",
    "exceed_counts",
    "gauss_upper_tail",
    "binom_upper_tail",
    "binom_inverse_tail",
]


class TimeSeries:
    """A ``p x n`` data matrix with its temporal prefix sums.

    ``prefix[:, c]`` holds the sum of the first ``c`` time steps, so
    ``prefix[:, 0] == 0`` and ``prefix[:, n]`` is the row sum.
    """

    __slots__ = ("data", "prefix", "_prefix_tm")

    def __init__(self, data, *, check: bool | None = None):
        arr = np.array(data, dtype=np.float64, ndmin=2, copy=True)
        if arr.ndim != 2:
            raise InvalidInputError("series data must be a p x n matrix")
        if arr.shape[1] < 2:
            raise InvalidInputError("series must contain at least two time steps")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("series contains non-finite values")
        prefix = np.zeros((arr.shape[0], arr.shape[1] + 1))
        np.cumsum(arr, axis=1, out=prefix[:, 1:])
        if check is None:
            check = arr.size <= 4096
        if check:
            rebuilt = np.diff(prefix, axis=1)
            scale = max(1.0, float(np.abs(prefix).max()))
            if not np.allclose(rebuilt, arr, rtol=0.0, atol=1e-12 * scale):
                raise InvalidInputError("prefix sums do not reproduce the data")
        arr.setflags(write=False)
        prefix.setflags(write=False)
        self.data = arr
        self.prefix = prefix
        self._prefix_tm = None

    @classmethod
    def from_time_major(cls, rows) -> "TimeSeries":
        """Build from an ``n x p`` array (rows are time steps, as in CSV files)."""
        return cls(np.asarray(rows, dtype=np.float64).reshape(len(rows), -1).T)

    @property
    def p(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def prefix_tm(self) -> np.ndarray:
        """Time-major ``(n + 1) x p`` copy of :attr:`prefix` used by the kernels."""
        if self._prefix_tm is None:
            tm = np.ascontiguousarray(self.prefix.T)
            tm.setflags(write=False)
            self._prefix_tm = tm
        return self._prefix_tm

    def __repr__(self) -> str:
        return f"TimeSeries(p={self.p}, n={self.n})"


@dataclass(frozen=True)
class CusumVector:
    values: np.ndarray
    l: int
    r: int
    sigma: float

    @property
    def p(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class BinomialSpec:
    trials: int
    success_prob: float

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 0:
            raise InvalidInputError(f"trials must be a nonnegative integer, got {self.trials}")
        if not 0.0 <= self.success_prob <= 1.0:
            raise InvalidInputError(f"success probability must lie in [0, 1], got {self.success_prob}")


def cusum(series: TimeSeries, point: GridPoint | tuple[int, int], sigma: float) -> CusumVector:
    """Rescaled CUSUM ``sqrt(r / 2 sigma^2) * (mean[l, l+r) - mean[l-r, l))``."""
    l, r = point
    if sigma <= 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    if not is_valid_point(series.n, l, r):
        raise OutOfRangeError(f"(l={l}, r={r}) is not a valid point for n={series.n}")
    P = series.prefix
    diff = (P[:, l + r - 1] - P[:, l - 1]) - (P[:, l - 1] - P[:, l - r - 1])
    values = diff * (1.0 / math.sqrt(2.0 * r * sigma * sigma))
    return CusumVector(values, int(l), int(r), float(sigma))


def cusum_block(prefix: np.ndarray, r: int, locs: np.ndarray, sigma: float) -> np.ndarray:
    """CUSUM vectors at scale ``r`` for many locations; returns an ``m x p`` array."""
    locs = np.asarray(locs, dtype=np.int64)
    mid = prefix[:, locs - 1]
    diff = (prefix[:, locs + r - 1] - mid) - (mid - prefix[:, locs - r - 1])
    return (diff * (1.0 / math.sqrt(2.0 * r * sigma * sigma))).T


def _values(c) -> np.ndarray:
    return np.asarray(getattr(c, "values", c), dtype=np.float64)


def dense_stat(c) -> float:
    """``||C||^2 - p``."""
    v = _values(c)
    return float(v @ v) - v.shape[0]


def partial_norms(c) -> np.ndarray:
    """Cumulative sums of squared entries sorted by decreasing magnitude.

    Entry ``s - 1`` is the partial norm for sparsity ``s``.
    """
    sq = _values(c) ** 2
    order = np.argsort(-sq, kind="stable")  # ties resolved by coordinate index
    return np.cumsum(sq[order])


def partial_norm(c, s: int) -> float:
    """Sum of the ``s`` largest squared CUSUM coordinates."""
    v = _values(c)
    if int(s) != s or not 1 <= s <= v.shape[0]:
        raise InvalidInputError(f"sparsity must lie in [1, {v.shape[0]}], got {s}")
    return float(partial_norms(v)[s - 1])


def exceed_counts(c, xmax: int) -> np.ndarray:
    """``N_x = #{i : |C_i| > x}`` for ``x = 1..xmax`` in one bucketing pass."""
    a = np.abs(_values(c))
    # |C| > x  <=>  ceil(|C|) - 1 >= x for integer x
    buckets = np.minimum(np.ceil(a) - 1.0, xmax).astype(np.int64)
    buckets = buckets[buckets >= 1]
    hist = np.bincount(buckets, minlength=xmax + 1)
    return np.cumsum(hist[::-1])[::-1][1:]


def exceed_count(c, x: int) -> int:
    if int(x) != x or x < 1:
        raise InvalidInputError(f"threshold must be a positive integer, got {x}")
    return int(exceed_counts(c, int(x))[-1])


def gauss_upper_tail(x):
    """Standard normal survival function ``P(Z > x)``."""
    out = ndtr(-np.asarray(x, dtype=np.float64))
    return float(out) if np.ndim(out) == 0 else out


# Binomial tail ---------------------------------------------------------------
#
# Up to EXACT_TRIALS trials the tail is evaluated in exact rational arithmetic
# (the float success probability is an exact dyadic rational), so ties such as
# P(B(2, 1/2) > 1) = 0.25 are resolved exactly.  Beyond that the PMF is summed
# in log space, with an exact re-check of the quantile boundary on near-ties.

EXACT_TRIALS = 128
_TIE_RTOL = 1e-9


def _dyadic(q: float) -> tuple[int, int, int]:
    f = Fraction(q)
    return f.numerator, f.denominator - f.numerator, f.denominator


@lru_cache(maxsize=4096)
def _exact_tail_numerators(trials: int, q: float) -> tuple[tuple[int, ...], int]:
    """Numerators ``N_u`` with ``P(B > u) = N_u / D**trials`` for ``u = 0..trials``."""
    a, b, d = _dyadic(q)
    nums = [0] * (trials + 1)
    acc = 0
    for k in range(trials, 0, -1):
        acc += math.comb(trials, k) * a**k * b ** (trials - k)
        nums[k - 1] = acc
    return tuple(nums), d**trials


def _exact_tail(trials: int, q: float, u: int) -> Fraction:
    a, b, d = _dyadic(q)
    num = sum(math.comb(trials, k) * a**k * b ** (trials - k) for k in range(u + 1, trials + 1))
    return Fraction(num, d**trials)


@lru_cache(maxsize=4096)
def _log_tails(trials: int, q: float) -> np.ndarray:
    """``log P(B > u)`` for ``u = 0..trials - 1`` (requires ``0 < q < 1``)."""
    k = np.arange(trials + 1, dtype=np.float64)
    logpmf = (
        gammaln(trials + 1.0)
        - gammaln(k + 1.0)
        - gammaln(trials - k + 1.0)
        + k * math.log(q)
        + (trials - k) * math.log1p(-q)
    )
    at_least = np.logaddexp.accumulate(logpmf[::-1])[::-1]
    out = at_least[1:].copy()
    out.setflags(write=False)
    return out


def binom_upper_tail(u: float, spec: BinomialSpec) -> float:
    """``P(B > u)`` for ``B ~ Binomial(trials, success_prob)``."""
    n, q = spec.trials, spec.success_prob
    if u < 0:
        return 1.0
    k = int(math.floor(u))
    if k >= n:
        return 0.0
    if q == 0.0:
        return 0.0
    if q == 1.0:
        return 1.0
    if n <= EXACT_TRIALS:
        nums, den = _exact_tail_numerators(n, q)
        return float(Fraction(nums[k], den))
    return float(np.exp(_log_tails(n, q)[k]))


@lru_cache(maxsize=65536)
def _inverse_tail(alpha: float, n: int, q: float) -> int:
    if q == 0.0 or n == 0:
        return 0
    if q == 1.0:
        return 0 if alpha >= 1.0 else n
    if n <= EXACT_TRIALS:
        nums, den = _exact_tail_numerators(n, q)
        bound = Fraction(alpha) * den
        # nums is nonincreasing; find the first index with nums[u] <= bound
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if nums[mid] <= bound:
                hi = mid
            else:
                lo = mid + 1
        return lo
    logt = _log_tails(n, q)
    la = math.log(alpha)
    # logt is nonincreasing; P(B > n) = 0 always satisfies the bound
    # first u with logt[u] <= la (searchsorted on the nondecreasing -logt)
    u = int(np.searchsorted(-logt, -la, side="left"))
    tol = _TIE_RTOL * max(1.0, abs(la))
    if u >= 1 and abs(logt[u - 1] - la) <= tol and _exact_tail(n, q, u - 1) <= Fraction(alpha):
        return u - 1
    if u < n and abs(logt[u] - la) <= tol and _exact_tail(n, q, u) > Fraction(alpha):
        return u + 1
    return u


def binom_inverse_tail(alpha: float, spec: BinomialSpec) -> int:
    """Smallest integer ``u >= 0`` with ``P(B > u) <= alpha``."""
    if not 0.0 < alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1], got {alpha}")
    return _inverse_tail(float(alpha), int(spec.trials), float(spec.success_prob))
