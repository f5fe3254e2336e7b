"""Monte-Carlo calibration of the unspecified numerical constants.

Two searches are provided:

* :func:`calibrate_thresholds` finds the smallest common multiplier ``c`` of the
  sub-Gaussian dense and partial-norm thresholds for which the empirical
  family-wise error on null data stays at or below ``delta``;
* :func:`calibrate_energy` finds the smallest energy constant ``c0`` for which a
  single change-point at energy ``c0 * psi`` is detected in at least
  ``target`` of the runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .gaussian import sparsity_levels
from .grid import build_grid
from .simulation import EnergyConstants, add_noise, make_rng, make_signal, psi_gaussian
from .stats import cusum_block

__all__ = ["null_multipliers", "calibrate_thresholds", "calibrate_energy", "CalibrationResult"]


@dataclass
class CalibrationResult:
    constants: dict
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {**self.constants, "evidence": self.evidence}


def null_multipliers(series, grid, sigma: float, delta: float, L: float) -> tuple[float, float]:
    """Smallest ``(c_dense, c_partial)`` keeping every test silent on ``series``.

    Each threshold is ``c * base``; the multiplier a statistic needs to stay
    silent is ``stat / base`` (dense) or ``(S_s - s) / base_s`` (partial).
    """
    n, p = series.n, series.p
    ratio = L * L / (sigma * sigma)
    sizes = np.asarray(sparsity_levels(p))
    cd = cp = 0.0
    for r in grid.scales:
        locs = grid.locations(r)
        C = cusum_block(series.prefix, r, locs, sigma)
        lg = math.log(n / (r * delta))
        dense = (C * C).sum(axis=1) - p
        cd = max(cd, float(dense.max()) / (ratio * (math.sqrt(p * lg) + lg)))
        top = np.cumsum(-np.sort(-(C * C), axis=1), axis=1)[:, sizes - 1]
        base = ratio * (sizes * np.log(2 * math.e * p / sizes) + lg)
        cp = max(cp, float(((top - sizes) / base).max()))
    return cd, cp


def _order_bracket(values, q: float, level: float = 0.95) -> tuple[float, float]:
    """Distribution-free confidence bracket for the ``q`` quantile from order statistics."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    m = v.size
    a = (1 - level) / 2
    lo = int(binom.ppf(a, m, q))          # 1-based rank of the lower order statistic
    hi = int(binom.ppf(1 - a, m, q)) + 1  # 1-based rank of the upper order statistic
    lo_v = float(v[lo - 1]) if lo >= 1 else float("-inf")
    hi_v = float(v[hi - 1]) if hi <= m else float("inf")
    return lo_v, hi_v


def calibrate_thresholds(n: int, p: int, *, sigma: float = 1.0, delta: float = 0.1,
                         noise: str = "gaussian", L: float | None = None, grid: str = "complete",
                         runs: int = 200, seed: int = 0) -> CalibrationResult:
    """Empirical ``(1 - delta)`` quantile of the per-run silencing multiplier."""
    from .simulation import noise_psi2

    L = L if L is not None else noise_psi2(noise, sigma)
    g = build_grid(n, grid)
    theta = np.zeros((p, n))
    cds, cps = [], []
    for i in range(runs):
        y = add_noise(theta, noise, sigma, rng=make_rng(seed, i, 1))
        cd, cp = null_multipliers(y, g, sigma, delta, L)
        cds.append(cd)
        cps.append(cp)
    both = np.maximum(cds, cps)
    c = float(np.quantile(both, 1 - delta, method="higher"))
    bracket = _order_bracket(both, 1 - delta)
    if runs < math.ceil(10 / delta):
        warnings.warn(f"{runs} runs is a small budget for delta={delta}; the bracket is wide",
                      stacklevel=2)
    evidence = {
        "n": n, "p": p, "sigma": sigma, "delta": delta, "noise": noise, "L": L, "grid": grid,
        "runs": runs, "seed": seed, "bracket_95": list(bracket),
        "c_dense_quantile": float(np.quantile(cds, 1 - delta, method="higher")),
        "c_partial_quantile": float(np.quantile(cps, 1 - delta, method="higher")),
        "fwer_at_constant": float(np.mean(both > c)),
    }
    return CalibrationResult({"c_dense": c, "c_partial": c}, evidence)


def calibrate_energy(n: int, p: int, *, sigma: float = 1.0, delta: float = 0.1,
                     grid: str = "dyadic", runs: int = 50, seed: int = 0, target: float = 0.95,
                     candidates=(1, 2, 4, 8, 16, 32, 64), sparsities=None) -> CalibrationResult:
    """Smallest candidate ``c0`` whose energy level is detected at rate ``>= target``.

    Uses the Gaussian combined test with a single change-point at ``n / 2`` for
    each sparsity in ``sparsities`` (default: ``1``, ``ceil(sqrt p)``, ``p``).
    The dense and sparse constants are set equal to ``c0``.
    """
    from .detect import detect
    from .evaluation import score
    from .gaussian import GaussianTestConfig

    cfg = GaussianTestConfig(n, p, sigma, delta, build_grid(n, grid))
    tau = n // 2
    r_k = min(tau - 1, n + 1 - tau)
    sparsities = sparsities or sorted({1, math.ceil(math.sqrt(p)), p})
    rates = {}
    chosen = None
    for c0 in candidates:
        worst = 1.0
        for s in sparsities:
            energy = c0 * sigma**2 * psi_gaussian(n, p, r_k, delta, s)
            h = math.sqrt(energy / r_k / s)
            mus = np.zeros((2, p))
            mus[1, :s] = h
            truth, theta = make_signal(n, p, [tau], mus)
            hit = 0
            for i in range(runs):
                y = add_noise(theta, "gaussian", sigma, rng=make_rng(seed, i, 1))
                hit += score(detect(y, cfg), truth).detected[0]
            rates[f"c0={c0},s={s}"] = hit / runs
            worst = min(worst, hit / runs)
        if worst >= target:
            chosen = float(c0)
            break
    if chosen is None:
        warnings.warn("no candidate reached the target detection rate", stacklevel=2)
        chosen = float(candidates[-1])
    consts = EnergyConstants(chosen, chosen, chosen)
    evidence = {"n": n, "p": p, "sigma": sigma, "delta": delta, "grid": grid, "runs": runs,
                "seed": seed, "target": target, "detection_rates": rates}
    return CalibrationResult(dict(consts.__dict__), evidence)
