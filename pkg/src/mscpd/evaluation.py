"""Scoring of segmentations and Monte-Carlo campaigns for FWER and power."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import beta

from .aggregation import Segmentation, hausdorff, wasserstein
from .errors import InvalidInputError
from .simulation import (
    EnergyConstants,
    GroundTruth,
    add_noise,
    classify_energy,
    lower_bound_instance,
    make_rng,
)

__all__ = [
    "detection_windows",
    "no_spurious_violations",
    "EvalResult",
    "score",
    "clopper_pearson",
    "CampaignSummary",
    "run_fwer_campaign",
    "run_power_campaign",
]


def detection_windows(taus: Sequence[int], n: int) -> list[tuple[Fraction, Fraction]]:
    """Closed windows ``[tau_k - (tau_k - tau_{k-1})/2, tau_k + (tau_{k+1} - tau_k)/2]``."""
    full = [1, *taus, n + 1]
    return [
        (Fraction(full[k]) - Fraction(full[k] - full[k - 1], 2),
         Fraction(full[k]) + Fraction(full[k + 1] - full[k], 2))
        for k in range(1, len(full) - 1)
    ]


def no_spurious_violations(est: Sequence, taus: Sequence[int], n: int) -> list[str]:
    """Reasons the estimate set breaks the No-Spurious property (empty if it holds)."""
    est = [Fraction(t) for t in est]
    out = []
    if not taus:
        if est:
            out.append(f"{len(est)} estimate(s) but no change-point")
        return out
    # work with doubled values so half-integer estimates stay integral
    full = [1, *taus, n + 1]
    twice = [2 * t for t in est]
    for k in range(1, len(full) - 1):
        a = full[k] + full[k - 1]  # 2 * (tau_k - (tau_k - tau_{k-1}) / 2)
        b = full[k] + full[k + 1]
        inside = sum(1 for t in twice if a <= t <= b)
        if inside > 1:
            out.append(f"window of tau_{k} = {full[k]} holds {inside} estimates")
    lo, hi = full[1] + 1, full[-2] + n + 1
    for t, t2 in zip(est, twice):
        if not lo <= t2 <= hi:
            out.append(f"estimate {t} lies outside the boundary range [{Fraction(lo, 2)}, {Fraction(hi, 2)}]")
    return out


@dataclass
class EvalResult:
    K: int
    K_hat: int
    no_spurious: bool
    violations: list[str]
    detected: list[bool]
    matched: list[Fraction | None]
    errors: list[Fraction | None]
    d_H: Fraction | None = None
    d_W: Fraction | None = None
    distance_note: str | None = None

    def to_dict(self) -> dict:
        f = lambda x: None if x is None else float(x)
        return {
            "K": self.K, "K_hat": self.K_hat, "no_spurious": self.no_spurious,
            "violations": self.violations, "detected": self.detected,
            "matched": [f(x) for x in self.matched], "errors": [f(x) for x in self.errors],
            "d_H": f(self.d_H), "d_W": f(self.d_W), "distance_note": self.distance_note,
        }


def score(result: Segmentation, truth: GroundTruth) -> EvalResult:
    """Evaluate No-Spurious, per-change-point detection and distances.

    A change-point is detected when some estimate lies in its closed window;
    its matched estimate is the nearest such estimate (ties to the left).
    """
    if result.n != truth.n:
        raise InvalidInputError(f"segmentation has n={result.n}, truth has n={truth.n}")
    est = result.taus
    taus = list(truth.changepoints)
    viol = no_spurious_violations(est, taus, truth.n)
    detected, matched, errors = [], [], []
    for tau, (a, b) in zip(taus, detection_windows(taus, truth.n)):
        inside = [t for t in est if a <= t <= b]
        if inside:
            m = min(inside, key=lambda t: (abs(t - tau), t))
            detected.append(True)
            matched.append(m)
            errors.append(abs(m - tau))
        else:
            detected.append(False)
            matched.append(None)
            errors.append(None)
    res = EvalResult(len(taus), len(est), not viol, viol, detected, matched, errors)
    if res.K_hat == res.K:
        res.d_H = hausdorff(est, taus)
        res.d_W = wasserstein(est, taus)
    else:
        res.distance_note = f"distances undefined: K_hat={res.K_hat} differs from K={res.K}"
    return res


def clopper_pearson(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Exact two-sided binomial confidence interval."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidInputError(f"invalid counts {successes}/{trials}")
    a = (1.0 - level) / 2.0
    lo = 0.0 if successes == 0 else float(beta.ppf(a, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(beta.ppf(1.0 - a, successes + 1, trials - successes))
    return lo, hi


@dataclass
class CampaignSummary:
    kind: str
    runs: int
    config: dict
    positives: int = 0
    fwer_hat: float | None = None
    fwer_ci: tuple[float, float] | None = None
    power: list[float] | None = None
    localized: list[float] | None = None
    mean_error: list[float | None] | None = None
    ratio_quantiles: dict | None = None
    wall_clock: dict = field(default_factory=dict)
    records: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "runs": self.runs, "config": self.config,
            "positives": self.positives, "fwer_hat": self.fwer_hat,
            "fwer_ci": list(self.fwer_ci) if self.fwer_ci else None,
            "power": self.power, "localized": self.localized, "mean_error": self.mean_error,
            "ratio_quantiles": self.ratio_quantiles, "wall_clock": self.wall_clock,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def one_line(self) -> str:
        if self.kind == "fwer":
            lo, hi = self.fwer_ci
            return (f"fwer: {self.positives}/{self.runs} runs with K_hat > 0 "
                    f"(rate {self.fwer_hat:.4f}, 95% CI [{lo:.4f}, {hi:.4f}])")
        pw = ", ".join(f"{x:.3f}" for x in self.power)
        lc = ", ".join(f"{x:.3f}" for x in self.localized)
        return f"power: {self.runs} runs, detection [{pw}], localized [{lc}]"


def _cfg_dict(cfg) -> dict:
    d = {"n": cfg.n, "p": cfg.p, "sigma": cfg.sigma, "delta": cfg.delta, "grid": cfg.grid.kind}
    if getattr(cfg, "L", None) is not None:
        d.update(L=cfg.L, c_dense=cfg.c_dense, c_partial=cfg.c_partial)
    return d


def _timing(times) -> dict:
    t = np.asarray(times)
    return {"total_s": float(t.sum()), "mean_s": float(t.mean()), "max_s": float(t.max())}


def run_fwer_campaign(cfg, noise: str = "gaussian", runs: int = 100, seed: int = 0, *,
                      algorithm: str = "v1", backend: str | None = None,
                      threads: int | None = None, level: float = 0.95) -> CampaignSummary:
    """Null runs through the full pipeline; counts runs with ``K_hat > 0``."""
    from .detect import detect

    if runs < 1:
        raise InvalidInputError("runs must be >= 1")
    theta = np.zeros((cfg.p, cfg.n))
    positives, times, records = 0, [], []
    for i in range(runs):
        t0 = time.perf_counter()
        series = add_noise(theta, noise, cfg.sigma, rng=make_rng(seed, i, 1))
        seg = detect(series, cfg, algorithm=algorithm, backend=backend, threads=threads)
        dt = time.perf_counter() - t0
        times.append(dt)
        positives += seg.K_hat > 0
        records.append({"run": i, "K_hat": seg.K_hat,
                        "taus": " ".join(str(float(t)) for t in seg.taus), "seconds": round(dt, 6)})
    return CampaignSummary(
        kind="fwer", runs=runs, config={**_cfg_dict(cfg), "noise": noise, "seed": seed},
        positives=positives, fwer_hat=positives / runs,
        fwer_ci=clopper_pearson(positives, runs, level), wall_clock=_timing(times), records=records,
    )


def run_power_campaign(cfg, truth: GroundTruth | Mapping, runs: int = 100, seed: int = 0, *,
                       noise: str = "gaussian", constants: EnergyConstants | None = None,
                       algorithm: str = "v1", backend: str | None = None,
                       threads: int | None = None) -> CampaignSummary:
    """Detection rate and localization relative to ``r*`` per change-point.

    ``truth`` is either a fixed :class:`GroundTruth` or a lower-bound prior
    ``{"case", "r", "s", "u"}`` redrawn every run.  A detection counts as
    localized when ``|tau_hat - tau_k| <= r*_k / 2``.
    """
    from .detect import detect

    if runs < 1:
        raise InvalidInputError("runs must be >= 1")
    constants = constants or EnergyConstants()
    fixed = isinstance(truth, GroundTruth)
    K = truth.K if fixed else None
    hits = loc = errs = None
    ratios: list[float] = []
    times, records = [], []
    for i in range(runs):
        t0 = time.perf_counter()
        if fixed:
            tr = truth
        else:
            tr = lower_bound_instance(truth["case"], cfg.n, cfg.p, int(truth["r"]), int(truth["s"]),
                                      float(truth["u"]), sigma=cfg.sigma, rng=make_rng(seed, i, 0))
        if hits is None or not fixed:
            report = classify_energy(tr, cfg, constants)
            rstar = [c.r_star for c in report.changepoints]
        if hits is None:
            K = tr.K
            hits, loc, errs = [0] * K, [0] * K, [[] for _ in range(K)]
        series = add_noise(tr.theta(), noise, cfg.sigma, rng=make_rng(seed, i, 1))
        seg = detect(series, cfg, algorithm=algorithm, backend=backend, threads=threads)
        ev = score(seg, tr)
        dt = time.perf_counter() - t0
        times.append(dt)
        rec = {"run": i, "K": tr.K, "K_hat": seg.K_hat, "no_spurious": ev.no_spurious,
               "taus": " ".join(str(float(t)) for t in seg.taus), "seconds": round(dt, 6)}
        for k in range(min(K, tr.K)):
            rec[f"detected_{k + 1}"] = ev.detected[k]
            rec[f"error_{k + 1}"] = None if ev.errors[k] is None else float(ev.errors[k])
            if ev.detected[k]:
                hits[k] += 1
                errs[k].append(float(ev.errors[k]))
                if rstar[k] is not None:
                    ratios.append(float(ev.errors[k]) / rstar[k])
                    loc[k] += ev.errors[k] <= Fraction(rstar[k]) / 2
        records.append(rec)
    q = None
    if ratios:
        qs = np.quantile(ratios, [0.5, 0.9, 0.99, 1.0])
        q = {"median": float(qs[0]), "q90": float(qs[1]), "q99": float(qs[2]), "max": float(qs[3])}
    return CampaignSummary(
        kind="power", runs=runs,
        config={**_cfg_dict(cfg), "noise": noise, "seed": seed,
                "truth": tr.to_dict() if fixed else dict(truth)},
        power=[h / runs for h in hits],
        localized=[(l / h if h else 0.0) for l, h in zip(loc, hits)],
        mean_error=[(float(np.mean(e)) if e else None) for e in errs],
        ratio_quantiles=q, wall_clock=_timing(times), records=records,
    )
