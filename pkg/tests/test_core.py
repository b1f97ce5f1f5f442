import math

import numpy as np
import pytest

from phidim.constructors import middle_third_gaps
from phidim.core import (DimensionFunction, GapSequence, LevelStats, RatioSchedule,
                         depth_table, level_comparable_bounds, level_sums,
                         level_sums_from_ratios, validate_dimension_function)
from phidim.errors import InsufficientTail, RatioOutOfRange

LOG3 = math.log(3.0)


def brute_level_sum(values, n):
    """2^-n times the tail sum from index 2^n, straight from the list."""
    return sum(values[2 ** n - 1:]) / 2 ** n


class TestLevelSums:
    def test_middle_third_is_powers_of_three(self):
        stats = level_sums(middle_third_gaps(40), 30)
        np.testing.assert_allclose(stats.log_s, -np.arange(31) * LOG3, rtol=1e-12, atol=1e-14)

    def test_lacunary_gaps_two_term_tail(self):
        # a_j = 2^-j: s_1 = (1/2) * sum_{j >= 2} 2^-j = 1/4
        gaps = GapSequence.from_values(0.5 ** np.arange(1, 41), tail=("geometric", 0.5))
        stats = level_sums(gaps, 4)
        assert math.exp(stats.log_s[0]) == pytest.approx(1.0, rel=1e-12)
        assert math.exp(stats.log_s[1]) == pytest.approx(0.25, rel=1e-12)

    def test_blocks_chosen_for_constant_ratio(self):
        r = 0.2
        # alpha_n = s_n (1 - 2r) keeps s_n = r^n exactly
        la = np.arange(30) * math.log(r) + math.log(1 - 2 * r)
        gaps = GapSequence.from_blocks(log_alphas=la, tail_ratio=r)
        stats = level_sums(gaps, 40)
        np.testing.assert_allclose(stats.log_s, np.arange(41) * math.log(r), rtol=1e-12,
                                   atol=1e-12)

    def test_explicit_matches_brute_tail(self):
        vals = sorted(np.random.default_rng(3).uniform(0.01, 1.0, 255), reverse=True)
        stats = level_sums(GapSequence.from_values(vals), 7)
        for n in range(8):
            assert math.exp(stats.log_s[n]) == pytest.approx(brute_level_sum(vals, n),
                                                             rel=1e-12)

    def test_zero_tail_runs_out(self):
        with pytest.raises(InsufficientTail):
            level_sums(GapSequence.from_values([0.3, 0.2, 0.1]), 3)
        with pytest.raises(InsufficientTail):
            level_sums(GapSequence.from_blocks([1 / 3, 1 / 9]), 5)

    def test_lambda_lower_bound_and_doubling_bound(self):
        gaps = middle_third_gaps(20)
        stats = level_sums(gaps, 18)
        s = np.exp(stats.log_s)
        kappa = 3.0
        lam = 1 / 3
        for n in range(18):
            assert s[n] >= gaps.terms([2 ** (n + 1)])[0] * (1 - 1e-12)
            assert (1 - 2 * lam) * s[n] <= gaps.terms([2 ** n])[0] * (1 + 1e-12)
            assert s[n] <= (2 + kappa ** 2) * s[n + 1]


class TestRatios:
    def test_equal_ratios(self):
        stats = level_sums_from_ratios(RatioSchedule([1 / 3] * 3))
        np.testing.assert_allclose(stats.log_s, [0, -LOG3, -2 * LOG3, -3 * LOG3])

    def test_product(self):
        stats = level_sums_from_ratios(RatioSchedule([1 / 3, 1 / 9]))
        assert math.exp(stats.log_s[2]) == pytest.approx(1 / 27)

    def test_empty(self):
        stats = level_sums_from_ratios(RatioSchedule([]))
        assert stats.log_s.tolist() == [0.0]
        assert stats.N == 0

    @pytest.mark.parametrize("bad", [0.5, 0.0, -0.1, 0.7, float("nan")])
    def test_out_of_range(self, bad):
        with pytest.raises(RatioOutOfRange):
            RatioSchedule([0.25, bad, 0.25])

    def test_level_stats_reject_slow_decay(self):
        with pytest.raises(ValueError):
            LevelStats([0.0, math.log(0.6)])


class TestDepth:
    stats = level_sums(middle_third_gaps(50), 60)

    def test_constant_zero(self):
        assert np.all(depth_table(DimensionFunction.constant(0), self.stats).phi == 0)

    def test_constant_one_doubles(self):
        phi = depth_table(DimensionFunction.constant(1), self.stats).phi
        n = np.arange(phi.size)
        resolved = 2 * n <= self.stats.N
        assert np.array_equal(phi[resolved], n[resolved])
        assert np.all(phi[~resolved] == -1)

    def test_reciprocal_log(self):
        # s_n^(1/|log s_n|) = 1/e and 1/3 < 1/e < 1, so one step always suffices
        phi = depth_table(DimensionFunction.reciprocal_log(1.0), self.stats).phi
        assert np.all(phi[1:] == 1)

    def test_matches_pure_python_search(self):
        rng = np.random.default_rng(11)
        stats = level_sums_from_ratios(RatioSchedule(rng.uniform(0.02, 0.45, 80)))
        fn = DimensionFunction.power_log(0.4)
        got = depth_table(fn, stats).phi
        ls = stats.log_s.tolist()
        for n in range(stats.N):
            target = (1 + float(fn.of_log(ls[n]))) * ls[n] if n else 0.0
            want = next((j for j in range(stats.N - n + 1)
                         if ls[n + j] <= target + 1e-12 * max(1.0, abs(target))), -1)
            assert got[n] == want, n


class TestBounds:
    def test_middle_third(self):
        lo, hi = level_comparable_bounds(level_sums(middle_third_gaps(20), 10))
        assert lo == pytest.approx(1 / 3) and hi == pytest.approx(1 / 3)

    def test_alternating(self):
        stats = level_sums_from_ratios(RatioSchedule([1 / 3, 1 / 27] * 4))
        lo, hi = level_comparable_bounds(stats)
        assert lo == pytest.approx(1 / 27) and hi == pytest.approx(1 / 3)

    def test_single_level(self):
        lo, hi = level_comparable_bounds(level_sums_from_ratios(RatioSchedule([0.2])))
        assert lo == hi == pytest.approx(0.2)


class TestDimensionFunction:
    def test_constant_is_valid(self):
        assert validate_dimension_function(DimensionFunction.constant(0.5),
                                           np.logspace(-1, -12, 50)).ok

    def test_loglog_is_valid(self):
        grid = 10.0 ** -np.arange(2, 11)
        assert validate_dimension_function(DimensionFunction.loglog(), grid).ok

    def test_table_violation_reported(self):
        # x^(1+phi) at 0.1 is 0.01, at 0.09 is 0.09^1.0 = 0.09 > 0.01
        fn = DimensionFunction.table([0.5, 0.1, 0.09, 0.01], [1.0, 1.0, 0.0, 0.0], rule="step")
        rep = validate_dimension_function(fn, [0.5, 0.1, 0.09, 0.01])
        assert len(rep.non_monotone) == 1
        assert rep.non_monotone[0][1:] == pytest.approx((0.1, 0.09))

    def test_round_trip(self):
        for fn in (DimensionFunction.constant(0.3), DimensionFunction.theta(0.25),
                   DimensionFunction.power_log(0.5).scaled(2.0),
                   DimensionFunction.reciprocal_log(1.5), DimensionFunction.loglog()):
            back = DimensionFunction.from_dict(fn.to_dict())
            u = np.linspace(-1, -200, 17)
            np.testing.assert_allclose(back.of_log(u), fn.of_log(u))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            DimensionFunction.constant(-0.1)
