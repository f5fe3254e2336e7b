"""Turn local test outcomes into change-point estimates.

Both procedures sweep scales in ascending order and only admit a firing
location ``l`` at scale ``r`` if its detection interval ``[l - r + 1, l + r - 1]``
avoids every interval already admitted at a smaller scale.  They differ in how
firings at the same scale interact:

* :func:`aggregate_v1` merges overlapping same-scale intervals and returns the
  midpoint of each connected component;
* :func:`aggregate_v2` keeps the leftmost firing and discards later overlapping
  ones, returning the admitted locations themselves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .grid import Grid

__all__ = [
    "TestOutcomeMap",
    "ChangePoint",
    "Segmentation",
    "aggregate_v1",
    "aggregate_v2",
    "Theorem1Report",
    "theorem1_check",
    "hausdorff",
    "wasserstein",
]


class TestOutcomeMap:
    """Boolean verdicts on every point of a grid.

    ``fired[r]`` is aligned with ``grid.locations(r)``.  ``sources`` optionally
    records which sub-test fired (kernel source codes).
    """

    __test__ = False
    __slots__ = ("grid", "fired", "sources")

    def __init__(self, grid: Grid, fired: Mapping[int, Sequence[bool]],
                 sources: Mapping[int, np.ndarray] | None = None):
        if set(fired) != set(grid.scales):
            raise InvalidInputError("verdict scales do not match the grid")
        self.grid = grid
        self.fired = {}
        for r in grid.scales:
            arr = np.asarray(fired[r], dtype=bool).copy()
            if arr.shape != grid.locations(r).shape:
                raise InvalidInputError(f"scale {r}: expected {grid.locations(r).size} verdicts")
            arr.setflags(write=False)
            self.fired[r] = arr
        self.sources = dict(sources) if sources is not None else None

    @classmethod
    def from_points(cls, grid: Grid, points: Iterable) -> "TestOutcomeMap":
        """Verdicts that are true exactly on ``points`` (pairs ``(l, r)``)."""
        fired = {r: np.zeros(grid.locations(r).size, dtype=bool) for r in grid.scales}
        for l, r in points:
            if (l, r) not in grid:
                raise InvalidInputError(f"({l}, {r}) is not a grid point")
            fired[r][np.searchsorted(grid.locations(r), l)] = True
        return cls(grid, fired)

    @classmethod
    def from_dict(cls, grid: Grid, verdicts: Mapping) -> "TestOutcomeMap":
        """Build from a full ``{(l, r): bool}`` map whose keys are exactly the grid."""
        if len(verdicts) != len(grid) or any(pt not in grid for pt in verdicts):
            raise InvalidInputError("verdict domain must equal the grid")
        return cls.from_points(grid, [pt for pt, v in verdicts.items() if v])

    def __getitem__(self, point) -> bool:
        l, r = point
        if (l, r) not in self.grid:
            raise KeyError(point)
        return bool(self.fired[r][np.searchsorted(self.grid.locations(r), l)])

    def firing(self, r: int) -> np.ndarray:
        """Firing locations at scale ``r``, ascending."""
        return self.grid.locations(r)[self.fired[r]]

    def firing_points(self) -> list[tuple[int, int]]:
        return [(int(l), r) for r in self.grid.scales for l in self.firing(r)]

    def count(self) -> int:
        return int(sum(int(a.sum()) for a in self.fired.values()))


@dataclass(frozen=True)
class ChangePoint:
    tau: Fraction
    interval: tuple[int, int]
    scales: tuple[int, ...]

    @property
    def tau_int(self) -> int:
        """``tau`` rounded to an integer, halves rounded down."""
        return math.ceil(self.tau - Fraction(1, 2))

    def to_dict(self) -> dict:
        t = self.tau
        return {
            "tau": int(t) if t.denominator == 1 else float(t),
            "tau_int": self.tau_int,
            "interval": list(self.interval),
            "scales": list(self.scales),
        }


@dataclass(frozen=True)
class Segmentation:
    """Estimated change-points with their detection components."""

    n: int
    changepoints: tuple[ChangePoint, ...] = field(default=())

    def __post_init__(self):
        cps = self.changepoints
        for a, b in zip(cps, cps[1:]):
            if not a.interval[1] < b.interval[0]:
                raise InvalidInputError("components must be disjoint and sorted")

    @property
    def K_hat(self) -> int:
        return len(self.changepoints)

    @property
    def taus(self) -> list[Fraction]:
        return [c.tau for c in self.changepoints]

    @property
    def components(self) -> list[tuple[int, int]]:
        return [c.interval for c in self.changepoints]

    def to_dict(self) -> dict:
        return {"K_hat": self.K_hat, "changepoints": [c.to_dict() for c in self.changepoints]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, n: int, data: Mapping) -> "Segmentation":
        cps = tuple(
            ChangePoint(Fraction(str(c["tau"])), tuple(c["interval"]), tuple(c["scales"]))
            for c in data["changepoints"]
        )
        if len(cps) != data["K_hat"]:
            raise InvalidInputError("K_hat does not match the number of change-points")
        return cls(n, cps)


class _Cover:
    """Covered subset of ``[1, n]`` with cached prefix counts."""

    __slots__ = ("mask", "_csum")

    def __init__(self, n: int):
        self.mask = np.zeros(n + 2, dtype=bool)
        self._csum = None

    def add(self, a: int, b: int) -> None:
        self.mask[a:b + 1] = True
        self._csum = None

    def admissible(self, locs: np.ndarray, r: int) -> np.ndarray:
        """Mask of locations whose interval avoids the covered set."""
        if self._csum is None:
            self._csum = np.concatenate(([0], np.cumsum(self.mask)))
        return self._csum[locs + r] - self._csum[locs - r + 1] == 0


def aggregate_v1(outcomes: TestOutcomeMap) -> Segmentation:
    """Merging aggregation.

    At each scale the admissible firing intervals are merged whenever they
    share an integer.  Intervals at different scales never overlap, so the
    merged groups are exactly the connected components of the union.
    """
    n = outcomes.grid.n
    cov = _Cover(n)
    comps: list[tuple[int, int, int]] = []
    for r in outcomes.grid.scales:
        locs = outcomes.firing(r)
        if locs.size == 0:
            continue
        locs = locs[cov.admissible(locs, r)]
        if locs.size == 0:
            continue
        # consecutive intervals of equal length overlap iff l' - l <= 2r - 2
        breaks = np.flatnonzero(np.diff(locs) > 2 * r - 2)
        starts = np.concatenate(([0], breaks + 1))
        ends = np.concatenate((breaks, [locs.size - 1]))
        for i, j in zip(starts, ends):
            a, b = int(locs[i]) - r + 1, int(locs[j]) + r - 1
            comps.append((a, b, r))
            cov.add(a, b)
    comps.sort()
    cps = tuple(ChangePoint(Fraction(a + b, 2), (a, b), (r,)) for a, b, r in comps)
    return Segmentation(n, cps)


def aggregate_v2(outcomes: TestOutcomeMap) -> Segmentation:
    """First-keep aggregation: every admitted interval is frozen immediately."""
    n = outcomes.grid.n
    cov = _Cover(n)
    kept: list[tuple[int, int]] = []
    for r in outcomes.grid.scales:
        locs = outcomes.firing(r)
        if locs.size == 0:
            continue
        locs = locs[cov.admissible(locs, r)]
        last = None
        for l in locs.tolist():
            if last is not None and l - last <= 2 * r - 2:
                continue
            kept.append((l, r))
            cov.add(l - r + 1, l + r - 1)
            last = l
    kept.sort()
    cps = tuple(ChangePoint(Fraction(l), (l - r + 1, l + r - 1), (r,)) for l, r in kept)
    return Segmentation(n, cps)


def _paired(u, v) -> list[Fraction]:
    u, v = list(u), list(v)
    if len(u) != len(v):
        raise InvalidInputError(f"paired distance needs equal lengths, got {len(u)} and {len(v)}")
    return [abs(Fraction(a) - Fraction(b)) for a, b in zip(sorted(u), sorted(v))]


def hausdorff(u, v) -> Fraction:
    """Paired Hausdorff distance ``max_k |u_k - v_k|`` of sorted vectors."""
    d = _paired(u, v)
    return max(d, default=Fraction(0))


def wasserstein(u, v) -> Fraction:
    """Paired Wasserstein distance ``sum_k |u_k - v_k|`` of sorted vectors."""
    return sum(_paired(u, v), Fraction(0))


@dataclass
class Theorem1Report:
    """Outcome of checking the deterministic detection guarantees."""

    event_a: bool
    detection_ok: bool
    no_spurious_ok: bool
    violations: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.detection_ok and self.no_spurious_ok


def _null_points(outcomes: TestOutcomeMap, tau_inner: Sequence[int]) -> list[tuple[int, int]]:
    """Firing points whose segment ``[l - r, l + r)`` contains no change-point."""
    taus = np.asarray(sorted(tau_inner), dtype=np.int64)
    out = []
    for r in outcomes.grid.scales:
        locs = outcomes.firing(r)
        if locs.size == 0:
            continue
        # theta is constant on [l - r, l + r - 1] iff no tau in (l - r, l + r - 1]
        i = np.searchsorted(taus, locs - r, side="right")
        j = np.searchsorted(taus, locs + r - 1, side="right")
        out.extend((int(l), r) for l in locs[i == j])
    return out


def theorem1_check(truth, significant: Iterable[int], anchors: Mapping[int, tuple[int, int]],
                   outcomes: TestOutcomeMap, result: Segmentation) -> Theorem1Report:
    """Verify detection and No-Spurious guarantees for one instance.

    Parameters
    ----------
    truth
        Object with ``n``, ``changepoints`` (inner change-points, ascending)
        and ``r`` (segment lengths ``r_k``); change-points are indexed from 1.
    significant
        Indices ``k`` of the change-points that must be detected.
    anchors
        ``k -> (tau_bar, r_bar)`` grid points at which each significant
        change-point is detected.
    outcomes, result
        Test verdicts and the segmentation computed from them.

    Raises
    ------
    InvalidInputError
        If an anchor is not a grid point, or violates ``4 (r_bar - 1) < r_k``
        or ``|tau_bar - tau_k| <= r_bar - 1``.
    """
    from .evaluation import no_spurious_violations

    taus = list(truth.changepoints)
    K = len(taus)
    significant = sorted(set(significant))
    for k in significant:
        if not 1 <= k <= K:
            raise InvalidInputError(f"change-point index {k} out of range 1..{K}")
        if k not in anchors:
            raise InvalidInputError(f"no anchor for significant change-point {k}")
        tb, rb = anchors[k]
        if (tb, rb) not in outcomes.grid:
            raise InvalidInputError(f"anchor ({tb}, {rb}) is not a grid point")
        if not 4 * (rb - 1) < truth.r[k - 1]:
            raise InvalidInputError(f"anchor scale {rb} too large for r_{k} = {truth.r[k - 1]}")
        if abs(tb - taus[k - 1]) > rb - 1:
            raise InvalidInputError(f"anchor location {tb} is farther than {rb - 1} from tau_{k}")

    violations: list[str] = []
    false_pos = _null_points(outcomes, taus)
    missing = [k for k in significant if not outcomes[anchors[k]]]
    event_a = not false_pos and not missing
    if false_pos:
        violations.append(f"event A fails: firing on null points {false_pos[:5]}")
    if missing:
        violations.append(f"event A fails: anchors of {missing} do not fire")

    est = result.taus
    detection_ok = True
    for k in significant:
        rb = anchors[k][1]
        if not any(abs(t - taus[k - 1]) <= rb - 1 for t in est):
            detection_ok = False
            violations.append(f"tau_{k} = {taus[k - 1]} has no estimate within {rb - 1}")
    nosp = no_spurious_violations(est, taus, truth.n)
    violations.extend(nosp)
    return Theorem1Report(event_a, detection_ok, not nosp, violations)
