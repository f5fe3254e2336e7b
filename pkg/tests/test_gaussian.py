import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mscpd import kernels
from mscpd.errors import InvalidInputError
from mscpd.gaussian import (
    GaussianTestConfig,
    _berk_jones,
    berk_jones_quantile,
    berk_jones_test,
    berk_jones_weight,
    berk_jones_xmax,
    combined_test,
    dense_test,
    dense_threshold,
    dense_threshold_value,
    partial_test,
    partial_threshold,
    partial_threshold_value,
    sparsity_levels,
)
from mscpd.grid import Grid, GridPoint, build_complete_grid
from mscpd.simulation import add_noise
from mscpd.stats import BinomialSpec, TimeSeries, binom_inverse_tail, gauss_upper_tail

# Lattice shared by the weight-budget checks here and in the acceptance suite.
BUDGET_LATTICE = [
    (n, p, d)
    for n, p, d in [
        (2, 1, 0.5), (4, 1, 0.1), (8, 3, 0.05), (16, 4, 0.1), (17, 16, 0.2),
        (31, 2, 0.01), (64, 64, 0.1), (100, 10, 0.3), (128, 7, 0.9), (255, 32, 0.1),
        (256, 1, 0.001), (500, 100, 0.05), (512, 5, 0.5), (1000, 50, 0.1), (1023, 9, 0.02),
        (1024, 256, 0.1), (2000, 3, 0.25), (4096, 64, 0.01), (5000, 500, 0.1), (10000, 100, 0.1),
    ]
]


def weight_budget(n, p, delta):
    """Exact rational sum of the computed weights over grid points and x <= x0."""
    cfg = GaussianTestConfig(n, p, delta=delta)
    total = Fraction(0)
    for r in cfg.grid.scales:
        m = len(cfg.grid.locations(r))
        x0 = berk_jones_xmax(cfg, r)
        total += m * sum(Fraction(berk_jones_weight(cfg, x, r)) for x in range(1, x0 + 1))
    return total


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(sigma=0.0), dict(sigma=-1.0), dict(delta=0.0),
                                    dict(delta=1.0), dict(delta=1.5)])
    def test_rejects(self, kw):
        with pytest.raises(InvalidInputError):
            GaussianTestConfig(16, 4, **kw)

    def test_grid_length_mismatch(self):
        with pytest.raises(InvalidInputError):
            GaussianTestConfig(16, 4, grid=build_complete_grid(20))

    def test_scale_not_in_grid(self):
        with pytest.raises(InvalidInputError):
            dense_threshold(GaussianTestConfig(16, 4), 3)

    def test_sparsity_levels(self):
        assert sparsity_levels(1) == [1]
        assert sparsity_levels(7) == [1, 2, 4]
        assert sparsity_levels(64) == [1, 2, 4, 8, 16, 32, 64]

    def test_table_json(self):
        d = GaussianTestConfig(32, 8).table.to_dict()
        assert d["kind"] == "gaussian"
        first = d["scales"][0]
        assert set(first) >= {"r", "dense_threshold", "x0", "quantiles", "partial_thresholds"}
        assert first["quantiles"][-1][1] == 0


class TestThresholds:
    def test_dense_value(self):
        assert dense_threshold_value(16, 4, 2, 1.0) == pytest.approx(24.4108, abs=1e-3)
        lg = math.log(16)
        assert dense_threshold_value(16, 4, 2, 1.0) == pytest.approx(4 * (math.sqrt(4 * lg) + lg), rel=1e-15)

    def test_dense_limit_p0(self):
        assert dense_threshold_value(16, 0, 2, 0.1) == pytest.approx(4 * math.log(2 * 16 / 0.2))

    def test_dense_decreasing_in_r(self):
        cfg = GaussianTestConfig(1024, 10)
        vals = [dense_threshold(cfg, r) for r in cfg.grid.scales]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_partial_value(self):
        r, d = 3, 0.2
        n = math.e * r * d
        assert partial_threshold_value(n, 1, r, d, 1) == pytest.approx(10.7726, abs=1e-4)

    def test_partial_second_term_vanishes(self):
        assert partial_threshold_value(10, 5, 10, 1.0, 2) == pytest.approx(8 * math.log(5 * math.e))

    @pytest.mark.parametrize("p", [1, 2, 7, 64, 1000])
    def test_partial_increasing_in_s(self, p):
        cfg = GaussianTestConfig(256, p)
        for r in cfg.grid.scales:
            vals = [partial_threshold(cfg, r, s) for s in cfg.sizes]
            assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_partial_rejects_offlattice_s(self):
        with pytest.raises(InvalidInputError):
            partial_threshold(GaussianTestConfig(64, 8), 2, 3)


class TestWeights:
    def test_quarter_on_doubling(self):
        cfg = GaussianTestConfig(128, 8)
        for r in cfg.grid.scales:
            assert berk_jones_weight(cfg, 6, r) == pytest.approx(berk_jones_weight(cfg, 3, r) / 4, rel=1e-14)

    def test_closed_form_with_full_count(self):
        # a custom grid with |D_r| = 2n/r locations gives 3 delta r^2 / (pi^2 n^2) at x = 1
        n, r, d = 64, 8, 0.1
        g = Grid(n, "custom", {r: np.arange(r + 1, r + 1 + 2 * n // r)})
        cfg = GaussianTestConfig(n, 4, delta=d, grid=g)
        assert berk_jones_weight(cfg, 1, r) == pytest.approx(3 * d * r * r / (math.pi**2 * n * n), rel=1e-14)

    @pytest.mark.parametrize("n", [16, 100, 1024])
    def test_per_scale_sum(self, n):
        cfg = GaussianTestConfig(n, 4, delta=0.1)
        for r in cfg.grid.scales:
            m = len(cfg.grid.locations(r))
            series = sum(berk_jones_weight(cfg, x, r) for x in range(1, 200_001)) * m
            assert series == pytest.approx(0.1 * r / n, rel=1e-5)

    @pytest.mark.parametrize("n,p,delta", BUDGET_LATTICE)
    def test_budget_exact(self, n, p, delta):
        assert weight_budget(n, p, delta) <= Fraction(delta)

    def test_rejects_x0(self):
        with pytest.raises(InvalidInputError):
            berk_jones_weight(GaussianTestConfig(16, 2), 0, 1)


class TestXmax:
    def test_small_case_terminates(self):
        cfg = GaussianTestConfig(8, 1, delta=0.5)
        x0 = berk_jones_xmax(cfg, 1)
        assert 1 <= x0 < 20
        # direct scan oracle
        want = next(x for x in range(1, 20)
                    if 2 * gauss_upper_tail(x) <= 6 * 0.5 * 1 / (math.pi**2 * x * x * 7 * 8))
        assert x0 == want

    def test_nondecreasing_in_p(self):
        for r in (1, 4, 16):
            xs = [berk_jones_xmax(GaussianTestConfig(64, p), r) for p in (1, 2, 8, 64, 512, 4096)]
            assert xs == sorted(xs)

    @pytest.mark.parametrize("p", [1, 5, 64, 300])
    def test_quantile_zero_beyond(self, p):
        cfg = GaussianTestConfig(128, p)
        for r in cfg.grid.scales:
            x0 = berk_jones_xmax(cfg, r)
            for x in range(x0, x0 + 5):
                assert berk_jones_quantile(cfg, x, r) == 0
            if x0 > 1:
                assert 2 * p * gauss_upper_tail(x0 - 1) > berk_jones_weight(cfg, x0 - 1, r)


def _series_with_cusum(c, r=2):
    """Series of length 2r whose CUSUM at (r + 1, r) equals c (sigma = 1)."""
    c = np.asarray(c, dtype=np.float64)
    n = 2 * r
    y = np.zeros((c.size, n))
    # mean difference d gives CUSUM sqrt(r/2) d
    y[:, r:] = c[:, None] / math.sqrt(r / 2)
    return TimeSeries(y), GridPoint(r + 1, r)


class TestLocalTests:
    def test_zero_data_never_fires(self):
        cfg = GaussianTestConfig(32, 6)
        ts = TimeSeries(np.zeros((6, 32)))
        for pt in cfg.grid:
            v = combined_test(ts, pt, cfg)
            assert not v.fired and v.source is None
            assert v.statistic_value == -6

    def test_strong_signal_fires_dense(self):
        n, p = 32, 16
        cfg = GaussianTestConfig(n, p)
        y = np.zeros((p, n))
        y[:, 16:] = 5.0
        ts = TimeSeries(y)
        v = dense_test(ts, GridPoint(17, 8), cfg)
        assert v.fired and v.source == "dense"
        assert v.statistic_value > v.threshold
        assert combined_test(ts, GridPoint(17, 8), cfg).source == "dense"

    def test_single_coordinate_fires_partial(self):
        n, p = 64, 32
        cfg = GaussianTestConfig(n, p)
        y = np.zeros((p, n))
        y[0, 32:] = 7.0 / math.sqrt(8.0)  # C_1 = 7 at r = 16: between the sparse and dense thresholds
        ts = TimeSeries(y)
        pt = GridPoint(33, 16)
        assert partial_test(ts, pt, cfg).fired
        assert berk_jones_test(ts, pt, cfg).fired
        assert not dense_test(ts, pt, cfg).fired
        assert combined_test(ts, pt, cfg).source == "berk_jones"

    def test_berk_jones_count_construction(self):
        n, p, r = 64, 64, 8
        cfg = GaussianTestConfig(n, p)
        x0 = berk_jones_xmax(cfg, r)
        s = cfg.table[r].quantiles[-1] + 1
        c = np.zeros(p)
        c[:s] = x0 + 1
        ts, pt = _series_with_cusum(c, r)
        cfg2 = GaussianTestConfig(ts.n, p, grid=Grid(ts.n, "custom", {r: [r + 1]}))
        assert berk_jones_test(ts, pt, cfg2).fired

    def test_verdict_invariant(self):
        rng = np.random.default_rng(0)
        cfg = GaussianTestConfig(48, 10)
        ts = TimeSeries(rng.normal(size=(10, 48)) * 2.5)
        for pt in cfg.grid:
            for f in (dense_test, berk_jones_test, partial_test, combined_test):
                v = f(ts, pt, cfg)
                if v.fired:
                    assert v.statistic_value > v.threshold

    def test_combined_order(self):
        rng = np.random.default_rng(1)
        cfg = GaussianTestConfig(40, 9)
        for _ in range(20):
            ts = TimeSeries(rng.normal(size=(9, 40)) * rng.uniform(0.5, 4))
            for pt in cfg.grid:
                d, b, s = (f(ts, pt, cfg) for f in (dense_test, berk_jones_test, partial_test))
                v = combined_test(ts, pt, cfg)
                assert v.fired == (d.fired or b.fired or s.fired)
                expect = "dense" if d.fired else "berk_jones" if b.fired else "partial" if s.fired else None
                assert v.source == expect

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        cfg = GaussianTestConfig(40, 5)
        ts = TimeSeries(rng.normal(size=(5, 40)))
        pts = list(cfg.grid)
        assert [combined_test(ts, p, cfg) for p in pts] == [combined_test(ts, p, cfg) for p in pts]

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            dense_test(TimeSeries(np.zeros((3, 16))), GridPoint(5, 2), GaussianTestConfig(16, 4))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(-10, 10)), st.floats(1.0, 3.0))
def test_dense_monotone_in_norm(c, factor):
    # scaling C up never turns a firing dense test off
    thr = dense_threshold_value(64, 6, 4, 0.1)
    small = float(c @ c) - 6 > thr
    big = float((factor * c) @ (factor * c)) - 6 > thr
    assert big or not small


@pytest.mark.parametrize("n", [16, 64, 256])
def test_berk_jones_p1_reduces_to_threshold(n):
    cfg = GaussianTestConfig(n, 1)
    rng = np.random.default_rng(n)
    for r in cfg.grid.scales:
        quants = cfg.table[r].quantiles
        x0 = berk_jones_xmax(cfg, r)
        for v in rng.uniform(0, x0 + 3, size=300):
            c = np.array([v * rng.choice([-1, 1])])
            assert _berk_jones(c, quants).fired == (abs(v) > x0)


def test_berk_jones_truncation_local():
    # scanning x up to 10 x0 gives the same verdicts (smaller version of the acceptance check)
    rng = np.random.default_rng(3)
    cfg = GaussianTestConfig(128, 40)
    for r in cfg.grid.scales:
        x0 = berk_jones_xmax(cfg, r)
        short = cfg.table[r].quantiles
        long = [berk_jones_quantile(cfg, x, r) for x in range(1, 10 * x0 + 1)]
        for _ in range(50):
            c = rng.normal(size=40) * rng.uniform(0.5, 3 * x0)
            assert _berk_jones(c, short).fired == _berk_jones(c, long).fired


def _null_subtest_fwer(cfg, which, runs, seed):
    hits = 0
    for i in range(runs):
        ts = add_noise(np.zeros((cfg.p, cfg.n)), "gaussian", 1.0, seed=seed + i)
        any_fire = False
        for r in cfg.grid.scales:
            cal = cfg.table[r]
            args = dict(
                dense=(cal.dense_threshold, True, [], [], []),
                berk_jones=(0.0, False, cal.quantiles, [], []),
                partial=(0.0, False, [], cal.sizes, cal.partial_thresholds),
            )[which]
            fired = kernels.evaluate_scale(ts.prefix_tm, cfg.grid.locations(r), r, 1.0, *args)[0]
            if fired.any():
                any_fire = True
                break
        hits += any_fire
    return hits / runs


@pytest.mark.parametrize("which,bound", [("dense", 0.2), ("berk_jones", 0.1), ("partial", 0.2)])
def test_null_subtest_fwer(which, bound):
    # dense and partial bounds are 2 delta, Berk-Jones is delta; 300 runs
    rate = _null_subtest_fwer(GaussianTestConfig(128, 8), which, 300, seed=100)
    assert rate <= bound


def test_quantile_matches_definition():
    cfg = GaussianTestConfig(64, 20)
    for r in cfg.grid.scales:
        for x in range(1, berk_jones_xmax(cfg, r) + 1):
            q0 = 2 * gauss_upper_tail(x)
            assert berk_jones_quantile(cfg, x, r) == binom_inverse_tail(
                berk_jones_weight(cfg, x, r), BinomialSpec(20, q0))
