"""Piecewise-constant signals, noise models, energy bookkeeping and lower-bound priors."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfi

from .errors import ConfigError, InvalidInputError
from .grid import Grid
from .stats import TimeSeries

__all__ = [
    "GroundTruth",
    "make_signal",
    "NOISE_MODELS",
    "noise_psi2",
    "make_rng",
    "add_noise",
    "EnergyConstants",
    "ChangePointEnergy",
    "EnergyReport",
    "psi_gaussian",
    "classify_energy",
    "nearest_location",
    "lb_delta",
    "lb_rhs",
    "lb_membership_violations",
    "lower_bound_instance",
    "Scenario",
    "realize",
]


# ---------------------------------------------------------------- signals


@dataclass(frozen=True)
class GroundTruth:
    """Piecewise-constant mean with ``K`` change-points.

    ``changepoints`` are the inner change-points ``tau_1 < ... < tau_K``; segment
    ``k`` (0-based) covers ``[tau_k, tau_{k+1})`` with sentinels ``tau_0 = 1``
    and ``tau_{K+1} = n + 1`` and has mean ``mus[k]``.
    """

    n: int
    p: int
    changepoints: tuple[int, ...]
    mus: np.ndarray = field(repr=False)

    def __post_init__(self):
        mus = np.array(self.mus, dtype=np.float64, ndmin=2)
        cps = tuple(int(t) for t in self.changepoints)
        if self.n < 2 or self.p < 1:
            raise InvalidInputError(f"need n >= 2 and p >= 1, got n={self.n}, p={self.p}")
        full = (1,) + cps + (self.n + 1,)
        if any(b <= a for a, b in zip(full, full[1:])):
            raise InvalidInputError(f"change-points must satisfy 1 < tau_1 < ... < tau_K <= n, got {cps}")
        if mus.shape != (len(cps) + 1, self.p):
            raise InvalidInputError(f"mus must be {(len(cps) + 1, self.p)}, got {mus.shape}")
        if not np.all(np.isfinite(mus)):
            raise InvalidInputError("mus contains non-finite values")
        if any(np.array_equal(mus[k], mus[k + 1]) for k in range(len(cps))):
            raise InvalidInputError("consecutive segment means must differ")
        mus.setflags(write=False)
        object.__setattr__(self, "changepoints", cps)
        object.__setattr__(self, "mus", mus)

    @property
    def K(self) -> int:
        return len(self.changepoints)

    @property
    def tau(self) -> tuple[int, ...]:
        """Change-points with both sentinels."""
        return (1,) + self.changepoints + (self.n + 1,)

    @property
    def jumps(self) -> np.ndarray:
        return np.diff(self.mus, axis=0)

    @property
    def delta(self) -> list[float]:
        return [float(np.linalg.norm(d)) for d in self.jumps]

    @property
    def r(self) -> list[int]:
        t = self.tau
        return [min(t[k + 1] - t[k], t[k] - t[k - 1]) for k in range(1, self.K + 1)]

    @property
    def s(self) -> list[int]:
        return [int(np.count_nonzero(d)) for d in self.jumps]

    def theta(self) -> np.ndarray:
        """``p x n`` mean matrix."""
        lengths = np.diff(self.tau)
        return np.repeat(self.mus, lengths, axis=0).T.copy()

    @classmethod
    def from_theta(cls, theta) -> "GroundTruth":
        theta = np.asarray(theta, dtype=np.float64)
        p, n = theta.shape
        change = np.flatnonzero(np.any(theta[:, 1:] != theta[:, :-1], axis=0)) + 2
        starts = np.concatenate(([1], change))
        return cls(n, p, tuple(int(t) for t in change), theta[:, starts - 1].T)

    def to_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "tau": list(self.changepoints), "mus": self.mus.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "GroundTruth":
        return cls(int(data["n"]), int(data["p"]), tuple(data["tau"]), np.asarray(data["mus"]))


def make_signal(n: int, p: int, tau: Sequence[int], mus) -> tuple[GroundTruth, np.ndarray]:
    """Build the truth and its ``p x n`` mean matrix from inner change-points."""
    truth = GroundTruth(n, p, tuple(tau), np.asarray(mus, dtype=np.float64).reshape(len(tau) + 1, p))
    return truth, truth.theta()


# ---------------------------------------------------------------- noise

NOISE_MODELS = ("gaussian", "scaled_rademacher", "uniform")


def noise_psi2(model: str, sigma: float) -> float:
    """psi_2 norm of one noise entry with standard deviation ``sigma``."""
    if model == "gaussian":
        return sigma * math.sqrt(8.0 / 3.0)
    if model == "scaled_rademacher":
        return sigma / math.sqrt(math.log(2.0))
    if model == "uniform":
        # X uniform on [-a, a]: E exp(X^2/t^2) = sqrt(pi) erfi(c) / (2c) with c = a/t
        a = sigma * math.sqrt(3.0)
        c = brentq(lambda c: math.sqrt(math.pi) * erfi(c) / (2.0 * c) - 2.0, 1e-6, 3.0)
        return a / c
    raise InvalidInputError(f"unknown noise model {model!r}")


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Generator for ``(seed, *stream)``; distinct streams are independent."""
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))


def add_noise(theta, model: str = "gaussian", sigma: float = 1.0, seed=None,
              rng: np.random.Generator | None = None) -> TimeSeries:
    """Add i.i.d. noise with variance ``sigma**2`` to a ``p x n`` mean matrix."""
    if not sigma > 0:
        raise InvalidInputError(f"sigma must be positive, got {sigma}")
    theta = np.asarray(theta, dtype=np.float64)
    if rng is None:
        rng = make_rng(seed)
    if model == "gaussian":
        eps = rng.standard_normal(theta.shape) * sigma
    elif model == "scaled_rademacher":
        eps = np.where(rng.random(theta.shape) < 0.5, -sigma, sigma)
    elif model == "uniform":
        a = sigma * math.sqrt(3.0)
        eps = rng.uniform(-a, a, size=theta.shape)
    else:
        raise InvalidInputError(f"unknown noise model {model!r}")
    return TimeSeries(theta + eps)


# ---------------------------------------------------------------- energy


@dataclass(frozen=True)
class EnergyConstants:
    c0: float = 8.0
    kappa_d: float = 8.0
    kappa_s: float = 8.0

    def __post_init__(self):
        if not (self.c0 > 0 and self.kappa_d > 0 and self.kappa_s > 0):
            raise InvalidInputError("energy constants must be positive")

    @classmethod
    def from_dict(cls, data: Mapping) -> "EnergyConstants":
        keys = {"c0", "kappa_d", "kappa_s"}
        return cls(**{k: float(v) for k, v in data.items() if k in keys})


def _lo(n, r, delta) -> float:
    return math.log(n / (r * delta))


def psi_gaussian(n: int, p: int, r: float, delta: float, s: int) -> float:
    """``s log(1 + sqrt(p)/s * sqrt(lo)) + lo`` with ``lo = log(n / (r delta))``."""
    lo = _lo(n, r, delta)
    return s * math.log(1.0 + math.sqrt(p) / s * math.sqrt(lo)) + lo


def _noise_bound(n, p, r, delta) -> float:
    lo = _lo(n, r, delta)
    return math.sqrt(p * lo) + lo


def _sparse_bound_gauss(n, p, r, delta, s) -> float:
    lo = _lo(n, r, delta)
    return s * math.log(math.e * p * lo / (s * s)) + lo


def _sparse_bound_sg(n, p, r, delta, s) -> float:
    return s * math.log(math.e * p / s) + _lo(n, r, delta)


def _psi_sg(n, p, r, delta, s) -> float:
    lo = _lo(n, r, delta)
    return min(math.sqrt(p * lo), s * math.log(math.e * p / s)) + lo


@dataclass(frozen=True)
class ChangePointEnergy:
    k: int
    tau: int
    delta: float
    r: int
    s: int
    energy: float
    gaussian_threshold: float
    subgaussian_threshold: float
    high_gaussian: bool
    high_subgaussian: bool
    dense_high: bool
    sparse_high: bool
    r_star: float | None
    r_bar_dense: int | None
    r_bar_sparse: int | None
    r_bar: int | None
    tau_bar: int | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class EnergyReport:
    regime: str
    constants: EnergyConstants
    changepoints: tuple[ChangePointEnergy, ...]

    @property
    def significant(self) -> list[int]:
        """Indices ``k`` (1-based) of high-energy change-points in this regime."""
        attr = "high_gaussian" if self.regime == "gaussian" else "high_subgaussian"
        return [c.k for c in self.changepoints if getattr(c, attr)]

    def anchors(self) -> dict[int, tuple[int, int]]:
        return {c.k: (c.tau_bar, c.r_bar) for c in self.changepoints if c.r_bar is not None}

    def to_dict(self) -> dict:
        return {
            "regime": self.regime,
            "constants": dict(self.constants.__dict__),
            "changepoints": [c.to_dict() for c in self.changepoints],
        }


def nearest_location(grid: Grid, r: int, tau: int) -> int:
    """Closest location to ``tau`` in ``D_r``; ties go to the left."""
    locs = grid.locations(r)
    i = int(np.searchsorted(locs, tau))
    cands = [int(locs[j]) for j in (i - 1, i) if 0 <= j < locs.size]
    return min(cands, key=lambda l: (abs(l - tau), l))


def _min_scale(scales, r_k, ok) -> int | None:
    for r in scales:
        if 4 * (r - 1) > r_k:
            return None
        if ok(r):
            return r
    return None


def _real_root(energy_at, rhs_at, r_hi) -> float | None:
    # smallest real r in (0, r_hi] with r * Delta^2 >= rhs(r); lhs - rhs is increasing
    g = lambda r: energy_at(r) - rhs_at(r)
    if g(r_hi) < 0:
        return None
    lo = r_hi
    while g(lo) >= 0:
        lo /= 2.0
        if lo < 1e-12:
            return lo
    return brentq(g, lo, r_hi, xtol=1e-12, rtol=1e-12)


def classify_energy(truth: GroundTruth, cfg, constants: EnergyConstants | None = None) -> EnergyReport:
    """Energy flags, the minimal real scale ``r*`` and grid anchors per change-point.

    The regime follows the config type: a config with an ``L`` attribute uses
    the sub-Gaussian conditions (constants multiply ``L^2``), otherwise the
    Gaussian ones (constants multiply ``sigma^2``).
    """
    constants = constants or EnergyConstants()
    if truth.n != cfg.n or truth.p != cfg.p:
        raise InvalidInputError("truth and config dimensions differ")
    sub = getattr(cfg, "L", None) is not None
    n, p, dl, sig2 = cfg.n, cfg.p, cfg.delta, cfg.sigma**2
    L2 = cfg.L**2 if sub else None
    scales = cfg.grid.scales
    out = []
    for k, (tau, D, r_k, s_k) in enumerate(zip(truth.changepoints, truth.delta, truth.r, truth.s), 1):
        D2 = D * D
        energy = r_k * D2
        lo_k = _lo(n, r_k, dl)
        g_thr = constants.c0 * sig2 * psi_gaussian(n, p, r_k, dl, s_k)
        sg_thr = (constants.c0 * L2 * _psi_sg(n, p, r_k, dl, s_k)) if sub else None
        sparse_side = s_k <= math.sqrt(p * lo_k)
        if sub:
            dense_high = energy >= constants.kappa_d * L2 * _noise_bound(n, p, r_k, dl)
            sparse_high = sparse_side and energy >= constants.kappa_s * L2 * _sparse_bound_sg(n, p, r_k, dl, s_k)
            rb_d = _min_scale(scales, r_k, lambda r: 4 * r * D2 >= constants.kappa_d * L2 * _noise_bound(n, p, r, dl))
            rb_s = _min_scale(scales, r_k, lambda r: 4 * r * D2 >= constants.kappa_s * L2 * _sparse_bound_sg(n, p, r, dl, s_k))
            cands = [x for x in (rb_d, rb_s) if x is not None]
            rb = min(cands) if cands else None
            r_star = _real_root(lambda r: r * D2, lambda r: constants.c0 * L2 * _psi_sg(n, p, r, dl, s_k), r_k)
        else:
            dense_high = energy >= constants.kappa_d * sig2 * _noise_bound(n, p, r_k, dl)
            sparse_high = sparse_side and energy >= constants.kappa_s * sig2 * _sparse_bound_gauss(n, p, r_k, dl, s_k)
            rb_d = _min_scale(scales, r_k, lambda r: 8 * r * D2 >= constants.kappa_d * sig2 * _noise_bound(n, p, r, dl))
            rb_s = (_min_scale(scales, r_k, lambda r: 8 * r * D2 >= constants.kappa_s * sig2 * _sparse_bound_gauss(n, p, r, dl, s_k))
                    if sparse_side else None)
            first, second = (rb_s, rb_d) if sparse_side else (rb_d, rb_s)
            rb = first if first is not None else second
            r_star = _real_root(lambda r: r * D2, lambda r: constants.c0 * sig2 * psi_gaussian(n, p, r, dl, s_k), r_k)
        tb = nearest_location(cfg.grid, rb, tau) if rb is not None else None
        out.append(ChangePointEnergy(
            k=k, tau=tau, delta=D, r=r_k, s=s_k, energy=energy,
            gaussian_threshold=g_thr, subgaussian_threshold=sg_thr,
            high_gaussian=energy >= g_thr,
            high_subgaussian=bool(sub and energy >= sg_thr),
            dense_high=dense_high, sparse_high=sparse_high,
            r_star=r_star, r_bar_dense=rb_d, r_bar_sparse=rb_s, r_bar=rb, tau_bar=tb,
        ))
    return EnergyReport("subgaussian" if sub else "gaussian", constants, tuple(out))


# ---------------------------------------------------------------- lower bound

LB_CASES = {"sparse": 1, "dense": 2, "single": 3, 1: 1, 2: 2, 3: 3}


def lb_rhs(n: int, p: int, r: float, s: int, u: float, sigma: float = 1.0) -> float:
    """``sigma^2 / 2 * [s log(1 + u sqrt(p)/s sqrt(log(n/r))) + u log(n/r)]``."""
    ln = math.log(n / r)
    return 0.5 * sigma**2 * (s * math.log(1.0 + u * math.sqrt(p) / s * math.sqrt(ln)) + u * ln)


def lb_delta(n: int, p: int, r: int, s: int, u: float, sigma: float = 1.0) -> float:
    """Jump height with ``r Delta^2`` equal to the lower-bound energy."""
    return math.sqrt(lb_rhs(n, p, r, s, u, sigma) / r)


def _check_lb(n, p, r, s, u):
    if not (isinstance(r, (int, np.integer)) and 1 <= r and 4 * r <= n):
        raise InvalidInputError(f"need 1 <= r <= n/4, got r={r}, n={n}")
    if not 1 <= s <= p:
        raise InvalidInputError(f"need 1 <= s <= p, got s={s}, p={p}")
    if not 0.0 < u <= 0.125:
        raise InvalidInputError(f"need 0 < u <= 1/8, got u={u}")


def lb_block_starts(n: int, r: int) -> list[int]:
    """Block starts ``1, r + 1, ...`` whose bump keeps every segment length >= r."""
    zeta = n // r - 1
    out = []
    for j in range(zeta + 1):
        l = j * r + 1
        gap = n + 1 - (l + r)
        if gap == 0 or gap >= r:
            out.append(l)
    return out


def lower_bound_instance(case, n: int, p: int, r: int, s: int, u: float,
                         seed=None, sigma: float = 1.0,
                         rng: np.random.Generator | None = None) -> GroundTruth:
    """Draw one mean from the lower-bound prior of the given case.

    The mean is a bump ``Theta = h * C * v_l^T`` on the block ``[l, l + r - 1]``:

    * ``sparse``: ``C`` uniform over ``s``-subsets, ``h = Delta / sqrt(s)``;
    * ``dense``: ``C`` uniform over ``s0``-subsets with
      ``s0 = ceil(u sqrt(p log(n/r)))``, ``h = Delta / sqrt(s0)``;
    * ``single``: ``C = e_1``, ``h = Delta``.
    """
    if case not in LB_CASES:
        raise InvalidInputError(f"unknown lower-bound case {case!r}")
    c = LB_CASES[case]
    _check_lb(n, p, r, s, u)
    rng = rng if rng is not None else make_rng(seed)
    D = lb_delta(n, p, r, s, u, sigma)
    if c == 1:
        k = s
    elif c == 2:
        k = math.ceil(u * math.sqrt(p * math.log(n / r)))
        if k > s:
            raise InvalidInputError(f"dense prior needs s0 = {k} <= s = {s}")
    else:
        k = 1
    support = np.sort(rng.choice(p, size=k, replace=False)) if c != 3 else np.array([0])
    h = D / math.sqrt(k)
    starts = lb_block_starts(n, r)
    l = int(starts[rng.integers(len(starts))])
    bump = np.zeros(p)
    bump[support] = h
    zero = np.zeros(p)
    tau, mus = [], []
    if l > 1:
        tau.append(l)
        mus.append(zero)
    mus.append(bump)
    if l + r <= n:
        tau.append(l + r)
        mus.append(zero)
    return GroundTruth(n, p, tuple(tau), np.array(mus))


def lb_membership_violations(truth: GroundTruth, u: float, r: int, s: int,
                             sigma: float = 1.0, rtol: float = 1e-9) -> list[str]:
    """Reasons why ``truth`` falls outside the lower-bound class (empty if inside)."""
    out = []
    for k, (D, r_k, s_k) in enumerate(zip(truth.delta, truth.r, truth.s), 1):
        if r_k < r:
            out.append(f"k={k}: r_k={r_k} < r={r}")
        if s_k > s:
            out.append(f"k={k}: s_k={s_k} > s={s}")
        rhs = lb_rhs(truth.n, truth.p, r_k, s_k, u, sigma)
        if r_k * D * D < rhs * (1.0 - rtol):
            out.append(f"k={k}: energy {r_k * D * D:.6g} below {rhs:.6g}")
    return out


# ---------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    """Simulation scenario: an explicit signal or a lower-bound prior."""

    n: int
    p: int
    sigma: float = 1.0
    delta: float = 0.1
    noise: str = "gaussian"
    tau: tuple[int, ...] | None = None
    mus: list | None = None
    prior: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if self.noise not in NOISE_MODELS:
            raise ConfigError(f"unknown noise model {self.noise!r}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if (self.prior is None) == (self.mus is None):
            raise ConfigError("scenario needs exactly one of 'mus' or 'prior'")
        if self.prior is not None:
            missing = {"case", "r", "s", "u"} - set(self.prior)
            if missing:
                raise ConfigError(f"prior is missing {sorted(missing)}")

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scenario":
        known = {"n", "p", "sigma", "delta", "noise", "tau", "mus", "prior", "seed"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown scenario keys {sorted(extra)}")
        try:
            d = dict(data)
            if d.get("tau") is not None:
                d["tau"] = tuple(int(t) for t in d["tau"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario is not valid JSON: {exc}") from None

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["tau"] is not None:
            d["tau"] = list(d["tau"])
        return d


def realize(scenario: Scenario, run: int = 0) -> tuple[GroundTruth, np.ndarray, TimeSeries]:
    """Draw truth, mean matrix and noisy series; deterministic in ``(seed, run)``."""
    try:
        if scenario.prior is not None:
            pr = scenario.prior
            truth = lower_bound_instance(pr["case"], scenario.n, scenario.p, int(pr["r"]), int(pr["s"]),
                                         float(pr["u"]), sigma=scenario.sigma,
                                         rng=make_rng(scenario.seed, run, 0))
        else:
            truth, _ = make_signal(scenario.n, scenario.p, scenario.tau or (), scenario.mus)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from None
    theta = truth.theta()
    series = add_noise(theta, scenario.noise, scenario.sigma, rng=make_rng(scenario.seed, run, 1))
    return truth, theta, series
