"""Exhaustive deterministic check of the aggregation guarantees on small series.

For every series length, grid, change-point configuration, set of significant
change-points and choice of anchors, test outcomes are built so that the event
"no firing on null points and every anchor fires" holds.  Both aggregation
procedures must then detect every significant change-point within
``r_bar - 1`` and produce no spurious estimate.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .aggregation import TestOutcomeMap, aggregate_v1, aggregate_v2, theorem1_check
from .grid import build_grid
from .simulation import GroundTruth

__all__ = ["changepoint_configs", "anchor_options", "SuiteResult", "run_theorem1_suite"]


def changepoint_configs(n: int, max_k: int = 3, min_spacing: int = 4):
    """All inner change-point tuples with gaps >= ``min_spacing`` including sentinels."""
    inner = range(1 + min_spacing, n + 2 - min_spacing)
    for k in range(max_k + 1):
        for taus in itertools.combinations(inner, k):
            full = (1,) + taus + (n + 1,)
            if all(b - a >= min_spacing for a, b in zip(full, full[1:])):
                yield taus


def anchor_options(grid, tau: int, r_k: int) -> list[tuple[int, int]]:
    """Grid points ``(l, r)`` with ``4 (r - 1) < r_k`` and ``|l - tau| <= r - 1``."""
    out = []
    for r in grid.scales:
        if 4 * (r - 1) >= r_k:
            break
        locs = grid.locations(r)
        near = locs[np.abs(locs - tau) <= r - 1]
        out.extend((int(l), r) for l in near)
    return out


def _null_masks(grid, taus):
    t = np.asarray(taus, dtype=np.int64)
    masks = {}
    for r in grid.scales:
        locs = grid.locations(r)
        if t.size:
            # segment [l - r, l + r - 1] has a change-point in (l - r, l + r - 1]
            hit = ((t[None, :] > (locs - r)[:, None]) & (t[None, :] <= (locs + r - 1)[:, None])).any(axis=1)
        else:
            hit = np.zeros(locs.size, dtype=bool)
        masks[r] = ~hit
    return masks


@dataclass
class SuiteResult:
    instances: int = 0
    checks: int = 0
    failures: list[dict] = field(default_factory=list)
    seconds: float = 0.0
    per_grid: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.instances > 0 and not self.failures

    def to_dict(self) -> dict:
        return {"instances": self.instances, "checks": self.checks, "passed": self.passed,
                "failures": self.failures[:50], "n_failures": len(self.failures),
                "per_grid": self.per_grid, "seconds": self.seconds}


def run_theorem1_suite(n_min: int = 6, n_max: int = 24, grids=("dyadic", "complete"),
                       max_k: int = 3, min_spacing: int = 4, anchor_cap: int = 8,
                       random_outcomes: int = 2, seed: int = 0) -> SuiteResult:
    """Run the exhaustive harness.

    Outcome maps per instance: only the anchors fire (minimal), every
    non-null point fires (maximal), and ``random_outcomes`` seeded random
    subsets of the non-null points that include the anchors.  When the
    product of per-change-point anchor options exceeds ``anchor_cap`` a seeded
    sample of that size is used, always including the nearest-location choice.
    """
    rng = np.random.default_rng(seed)
    res = SuiteResult()
    t0 = time.perf_counter()
    for kind in grids:
        count = 0
        for n in range(n_min, n_max + 1):
            grid = build_grid(n, kind)
            for taus in changepoint_configs(n, max_k, min_spacing):
                K = len(taus)
                mus = np.arange(K + 1, dtype=np.float64).reshape(-1, 1)
                truth = GroundTruth(n, 1, taus, mus)
                rks = truth.r
                null = _null_masks(grid, taus)
                opts = [anchor_options(grid, t, rk) for t, rk in zip(taus, rks)]
                nonnull = {r: ~null[r] for r in grid.scales}
                for size in range(K + 1):
                    for sig in itertools.combinations(range(1, K + 1), size):
                        choices = [opts[k - 1] for k in sig]
                        if any(not c for c in choices):
                            continue
                        combos = _anchor_combos(choices, taus, sig, anchor_cap, rng)
                        for combo in combos:
                            anchors = dict(zip(sig, combo))
                            for fired in _outcome_variants(grid, anchors, nonnull, random_outcomes, rng):
                                outcomes = TestOutcomeMap(grid, fired)
                                for name, agg in (("v1", aggregate_v1), ("v2", aggregate_v2)):
                                    rep = theorem1_check(truth, sig, anchors, outcomes, agg(outcomes))
                                    res.checks += 1
                                    if not (rep.event_a and rep.passed):
                                        res.failures.append({
                                            "grid": kind, "n": n, "tau": list(taus),
                                            "significant": list(sig),
                                            "anchors": {str(k): list(v) for k, v in anchors.items()},
                                            "algorithm": name, "violations": rep.violations,
                                        })
                                res.instances += 1
                                count += 1
        res.per_grid[kind] = count
    res.seconds = time.perf_counter() - t0
    return res


def _anchor_combos(choices, taus, sig, cap, rng):
    total = 1
    for c in choices:
        total *= len(c)
    if total <= cap:
        return list(itertools.product(*choices))
    # nearest location at the smallest admissible scale, plus a seeded sample
    nearest = tuple(min(c, key=lambda pt: (pt[1], abs(pt[0] - taus[k - 1]), pt[0]))
                    for c, k in zip(choices, sig))
    out = {nearest}
    while len(out) < cap:
        out.add(tuple(c[rng.integers(len(c))] for c in choices))
    return sorted(out)


def _outcome_variants(grid, anchors, nonnull, n_random, rng):
    base = {r: np.zeros(grid.locations(r).size, dtype=bool) for r in grid.scales}
    for l, r in anchors.values():
        base[r][np.searchsorted(grid.locations(r), l)] = True
    yield base
    yield {r: base[r] | nonnull[r] for r in grid.scales}
    for _ in range(n_random):
        yield {r: base[r] | (nonnull[r] & (rng.random(base[r].size) < 0.5)) for r in grid.scales}
