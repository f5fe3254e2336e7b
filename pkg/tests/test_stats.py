from fractions import Fraction
from math import comb

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mscpd.errors import InvalidInputError, OutOfRangeError
from mscpd.stats import (
    BinomialSpec,
    TimeSeries,
    binom_inverse_tail,
    binom_upper_tail,
    cusum,
    cusum_block,
    dense_stat,
    exceed_count,
    exceed_counts,
    gauss_upper_tail,
    partial_norm,
    partial_norms,
)

from .oracles import binom_tail_exact, inverse_tail_scan, naive_cusum, topk_sum

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestTimeSeries:
    def test_prefix(self):
        ts = TimeSeries([[1.0, 2.0, 3.0], [0.0, -1.0, 1.0]])
        assert ts.prefix[:, 0].tolist() == [0.0, 0.0]
        assert ts.prefix[:, -1].tolist() == [6.0, 0.0]
        assert ts.prefix_tm.shape == (4, 2)
        assert np.array_equal(ts.prefix_tm, ts.prefix.T)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidInputError):
            TimeSeries([[1.0, np.nan]])

    def test_rejects_single_step(self):
        with pytest.raises(InvalidInputError):
            TimeSeries([[1.0]])

    def test_copy_isolated(self):
        raw = np.zeros((1, 4))
        ts = TimeSeries(raw)
        raw[0, 0] = 5.0
        assert ts.data[0, 0] == 0.0


class TestCusum:
    def test_hand_value(self):
        ts = TimeSeries([[0.0, 0.0, 2.0, 2.0]])
        assert cusum(ts, (3, 2), 1.0).values.tolist() == [2.0]

    def test_constant_series(self):
        ts = TimeSeries(np.full((3, 20), 4.2))
        # prefix sums of 4.2 are inexact; the residual is at rounding level
        np.testing.assert_allclose(cusum(ts, (10, 5), 1.3).values, 0.0, atol=1e-12)
        assert np.all(cusum(TimeSeries(np.full((3, 20), 4.0)), (10, 5), 1.3).values == 0.0)

    def test_linearity(self):
        rng = np.random.default_rng(1)
        y = rng.normal(size=(5, 40))
        a = cusum(TimeSeries(y), (20, 8), 1.0).values
        b = cusum(TimeSeries(3 * y), (20, 8), 1.0).values
        np.testing.assert_allclose(b, 3 * a, rtol=1e-12)

    def test_invalid_point(self):
        ts = TimeSeries(np.zeros((1, 10)))
        with pytest.raises(OutOfRangeError):
            cusum(ts, (2, 2), 1.0)
        with pytest.raises(InvalidInputError):
            cusum(ts, (5, 2), 0.0)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(40):
            n = int(rng.integers(2, 201))
            p = int(rng.integers(1, 21))
            y = rng.normal(size=(p, n)) * rng.uniform(0.1, 10) + rng.uniform(-5, 5)
            ts = TimeSeries(y)
            sigma = float(rng.uniform(0.5, 2))
            for _ in range(10):
                r = int(rng.integers(1, n // 2 + 1))
                l = int(rng.integers(r + 1, n - r + 2))
                got = cusum(ts, (l, r), sigma).values
                want = naive_cusum(y, l, r, sigma)
                worst = max(worst, float(np.max(np.abs(got - want) / np.maximum(1.0, np.abs(want)))))
        assert worst <= 1e-10

    def test_block_matches_pointwise(self):
        rng = np.random.default_rng(3)
        ts = TimeSeries(rng.normal(size=(4, 64)))
        locs = np.arange(9, 57)
        block = cusum_block(ts.prefix, 8, locs, 1.5)
        for i, l in enumerate(locs):
            np.testing.assert_array_equal(block[i], cusum(ts, (int(l), 8), 1.5).values)

    def test_null_standard_normal(self):
        rng = np.random.default_rng(11)
        M = 100_000
        y = rng.normal(size=(M, 16))
        ts = TimeSeries(y, check=False)
        c = cusum_block(ts.prefix, 8, np.array([9]), 1.0).ravel()
        assert abs(c.mean()) <= 4 / np.sqrt(M)
        assert abs(c.var() - 1.0) <= 0.1


class TestDenseAndPartial:
    def test_dense_examples(self):
        assert dense_stat(np.zeros(4)) == -4
        assert dense_stat(np.ones(4)) == 0
        assert dense_stat(np.array([3.0, 0.0])) == 7

    def test_partial_examples(self):
        c = np.array([3.0, -1.0, 2.0])
        assert partial_norm(c, 2) == 13
        assert partial_norm(c, 3) == dense_stat(c) + 3
        assert partial_norm(np.zeros(5), 3) == 0

    @pytest.mark.parametrize("s", [0, 4, 1.5])
    def test_partial_range(self, s):
        with pytest.raises(InvalidInputError):
            partial_norm(np.zeros(3), s)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 40), elements=finite))
    def test_partial_against_selection_oracle(self, c):
        norms = partial_norms(c)
        for s in range(1, c.size + 1):
            assert norms[s - 1] == pytest.approx(topk_sum(c, s), rel=1e-12, abs=1e-12)
        assert np.all(np.diff(norms) >= 0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.int64, st.integers(1, 40), elements=st.integers(-64, 64)))
    def test_partial_exact_on_dyadic_inputs(self, ints):
        # quarter-integers square and sum exactly in float64
        c = ints / 4.0
        for s in range(1, c.size + 1):
            assert partial_norm(c, s) == topk_sum(c, s)
        assert partial_norm(c, c.size) == dense_stat(c) + c.size

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.integers(1, 30), elements=finite), st.randoms())
    def test_permutation_invariance(self, c, rnd):
        perm = list(range(c.size))
        rnd.shuffle(perm)
        d = c[perm]
        assert dense_stat(d) == pytest.approx(dense_stat(c), rel=1e-12, abs=1e-9)
        for s in range(1, c.size + 1):
            assert partial_norm(d, s) == partial_norm(c, s)
        for x in range(1, 6):
            assert exceed_count(d, x) == exceed_count(c, x)


class TestExceedCounts:
    def test_hand_value(self):
        assert exceed_count(np.array([0.5, 1.2, 3.7]), 1) == 2
        assert exceed_count(np.zeros(7), 1) == 0

    def test_boundary_is_strict(self):
        assert exceed_count(np.array([1.0, 2.0, -2.0]), 2) == 0
        assert exceed_count(np.array([1.0, 2.0, -2.0]), 1) == 2

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            exceed_count(np.zeros(2), 0)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.integers(1, 50), elements=st.floats(-25, 25, allow_nan=False)))
    def test_bucketing_equals_direct(self, c):
        counts = exceed_counts(c, 20)
        direct = [int(np.sum(np.abs(c) > x)) for x in range(1, 21)]
        assert counts.tolist() == direct
        assert np.all(np.diff(counts) <= 0)


class TestGaussTail:
    def test_symmetry_and_limits(self):
        assert gauss_upper_tail(0.0) == 0.5
        assert gauss_upper_tail(np.inf) == 0.0
        assert gauss_upper_tail(-np.inf) == 1.0

    def test_quantile(self):
        assert gauss_upper_tail(1.959963985) == pytest.approx(0.025, abs=1e-9)

    def test_relative_error_vs_mpmath(self):
        mpmath.mp.dps = 40
        xs = np.linspace(-8, 8, 1601)
        got = gauss_upper_tail(xs)
        want = np.array([float(mpmath.ncdf(-mpmath.mpf(float(x)))) for x in xs])
        assert np.max(np.abs(got - want) / want) <= 1e-12


class TestBinomial:
    def test_examples(self):
        spec = BinomialSpec(2, 0.5)
        assert binom_upper_tail(-1, spec) == 1.0
        assert binom_upper_tail(2, spec) == 0.0
        assert binom_upper_tail(0, spec) == 0.75
        assert binom_upper_tail(1, spec) == 0.25
        assert binom_inverse_tail(0.3, spec) == 1
        assert binom_inverse_tail(1.0, spec) == 0
        assert binom_inverse_tail(0.25, spec) == 1  # exact tie resolves to <=
        assert binom_inverse_tail(0.01, BinomialSpec(9, 0.0)) == 0

    @pytest.mark.parametrize("alpha", [0.0, -0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(InvalidInputError):
            binom_inverse_tail(alpha, BinomialSpec(3, 0.5))

    def test_spec_validation(self):
        with pytest.raises(InvalidInputError):
            BinomialSpec(3, 1.5)
        with pytest.raises(InvalidInputError):
            BinomialSpec(-1, 0.5)

    def test_tail_vs_exact(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            n = int(rng.integers(0, 60))
            q = float(rng.uniform())
            u = int(rng.integers(-1, n + 2))
            assert binom_upper_tail(u, BinomialSpec(n, q)) == pytest.approx(
                float(binom_tail_exact(n, q, u)), rel=1e-12, abs=1e-300)

    def test_large_trials_log_space(self):
        mpmath.mp.dps = 50
        n, q, u = 800, 0.003, 12
        want = mpmath.fsum(mpmath.binomial(n, k) * mpmath.mpf(q) ** k * (1 - mpmath.mpf(q)) ** (n - k)
                           for k in range(u + 1, n + 1))
        assert binom_upper_tail(u, BinomialSpec(n, q)) == pytest.approx(float(want), rel=1e-10)

    def test_inverse_exhaustive_small(self):
        """Inverse quantile equals the brute-force scan for every trials <= 50."""
        alphas = [10.0 ** -k for k in range(1, 10)] + [0.5, 0.3, 0.25, 0.05, 0.02, 1.0]
        qs = [i / 100 for i in range(101)]
        mismatches = 0
        for n in range(0, 51):
            for q in qs:
                for a in alphas:
                    u = binom_inverse_tail(a, BinomialSpec(n, q))
                    mismatches += u != inverse_tail_scan(n, q, a)
        assert mismatches == 0

    def test_inverse_large_trials_bracket(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(129, 1500))
            q = float(10 ** rng.uniform(-5, -0.3))
            a = float(10 ** rng.uniform(-10, -0.5))
            spec = BinomialSpec(n, q)
            u = binom_inverse_tail(a, spec)
            assert binom_upper_tail(u, spec) <= a * (1 + 1e-9)
            if u >= 1:
                assert binom_upper_tail(u - 1, spec) > a * (1 - 1e-9)


def test_binom_tail_exact_oracle_sanity():
    # the oracle itself against the closed form for a fair coin
    tails = binom_tail_exact(4, 0.5)
    assert tails[0] == Fraction(15, 16)
    assert tails[3] == Fraction(1, 16)
    assert sum(comb(4, k) for k in range(5)) == 16
