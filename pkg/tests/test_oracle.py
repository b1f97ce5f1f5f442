import itertools
import math
import warnings

import numpy as np
import pytest

from phidim.constructors import (cantor_approximation, decreasing_rearrangement,
                                 middle_third_gaps, random_rearrangement)
from phidim.core import LOG2, DimensionFunction, GapSequence
from phidim.errors import IncompatibleSources, ResolutionWarning
from phidim.oracle import (FiniteApproximation, check_lemma_box, check_prop_dec,
                           covering_number, empirical_phi_dim, empirical_slope_profile,
                           global_covering_number, lemma_box_ratios, packing_number,
                           sample_centers, scale_pairs)

MT = LOG2 / math.log(3)
THREE = FiniteApproximation.from_points([0.0, 0.5, 1.0])


def dp_cover(lefts, rights, lo, hi, r):
    """Optimal cover by dynamic programming over runs of consecutive pieces."""
    iv = [(max(a, lo), min(b, hi)) for a, b in zip(lefts, rights) if b >= lo and a <= hi]
    best = [0] + [math.inf] * len(iv)
    for i in range(1, len(iv) + 1):
        for j in range(i):
            span = iv[i - 1][1] - iv[j][0]
            best[i] = min(best[i], best[j] + max(1, math.ceil(span / (2 * r) - 1e-12)))
    return best[-1]


def subset_packing(points, lo, hi, r):
    """Largest subset of the points in [lo, hi] with pairwise gaps above 2r."""
    pts = [p for p in points if lo <= p <= hi]
    for size in range(len(pts), 0, -1):
        for combo in itertools.combinations(pts, size):
            if all(b - a > 2 * r for a, b in zip(combo, combo[1:])):
                return size
    return 0


@pytest.fixture(scope="module")
def mt_gaps():
    return middle_third_gaps(40)


class TestCounts:
    def test_three_points(self):
        assert covering_number(THREE, 0.5, 1.0, 0.1) == 3
        assert packing_number(THREE, 0.5, 1.0, 0.1) == 3

    def test_three_points_wide_packing(self):
        assert packing_number(THREE, 0.5, 1.0, 0.3) == 2

    def test_middle_third_level_two(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 2)
        assert F.size == 4
        np.testing.assert_allclose(F.rights - F.lefts, 1 / 9)
        assert covering_number(F, 0.0, 1.0, 1 / 9) == 4

    def test_one_ball_suffices(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 6)
        assert covering_number(F, 0.5, 2.0, 0.5) == 1
        assert global_covering_number(F, F.diameter / 2) == 1

    def test_empty_window(self):
        assert covering_number(THREE, 0.25, 0.1, 0.01) == 0
        assert packing_number(THREE, 0.25, 0.1, 0.01) == 0

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            covering_number(THREE, 0.5, 1.0, 0.0)

    @pytest.mark.parametrize("seed", range(20))
    def test_cover_matches_dynamic_program(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(25):
            n = int(rng.integers(1, 15))
            x = np.sort(rng.uniform(0, 1, 2 * n))
            F = FiniteApproximation(x[0::2], x[1::2])
            z, R, r = rng.uniform(0, 1), rng.uniform(0.05, 1), rng.uniform(0.002, 0.3)
            assert covering_number(F, z, R, r) == dp_cover(F.lefts, F.rights, z - R, z + R, r)

    @pytest.mark.parametrize("seed", range(10))
    def test_packing_matches_subsets(self, seed):
        rng = np.random.default_rng(100 + seed)
        for _ in range(20):
            pts = np.sort(rng.uniform(0, 1, int(rng.integers(1, 11))))
            F = FiniteApproximation.from_points(pts)
            z, R, r = rng.uniform(0, 1), rng.uniform(0.05, 1), rng.uniform(0.005, 0.2)
            assert packing_number(F, z, R, r) == subset_packing(F.lefts, z - R, z + R, r)

    def test_packing_cover_comparability(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 10)
        for r in np.logspace(-4, -0.5, 15):
            P = packing_number(F, 0.3, 0.4, r)
            assert covering_number(F, 0.3, 0.4, r) / 2 <= P
            assert P <= 2 * covering_number(F, 0.3, 0.4, r / 2)


class TestApproximation:
    def test_validation(self):
        with pytest.raises(ValueError):
            FiniteApproximation([0.0, 0.5], [0.6, 0.7])
        with pytest.raises(ValueError):
            FiniteApproximation([0.2], [0.1])

    def test_union_and_shift(self):
        A = FiniteApproximation([0.0], [0.2])
        B = A.shifted(0.1)
        U = A.union(B)
        assert U.size == 1 and U.hi == pytest.approx(0.3)

    def test_nearest_point(self):
        F = FiniteApproximation([0.0, 0.6], [0.2, 0.7])
        np.testing.assert_allclose(F.nearest_point([0.1, 0.35, 0.5, 0.9]), [0.1, 0.2, 0.6, 0.7])

    def test_centres_deterministic(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 8)
        a = sample_centers(F, max_centers=50, extras=20, seed=4)
        b = sample_centers(F, max_centers=50, extras=20, seed=4)
        assert np.array_equal(a, b)


class TestEmpirical:
    def test_middle_third_slope(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 14)
        grid = 3.0 ** -np.arange(2, 8)
        est = empirical_phi_dim(F, DimensionFunction.constant(0.0), grid, r_steps=8,
                                r_factor=1 / 3)
        assert est.slope == pytest.approx(MT, abs=0.05)
        assert est.kind == "pairs"
        assert len(list(est.scatter_rows())) == len(est.rows)

    def test_resolution_warning(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 6)
        with pytest.warns(ResolutionWarning):
            est = empirical_phi_dim(F, DimensionFunction.constant(0.0), [1e-2, 1e-6])
        assert est.dropped == [1e-6]

    def test_scale_pairs_respect_floor(self):
        pairs, dropped = scale_pairs(DimensionFunction.constant(1.0), [0.1, 0.001], 1e-5,
                                     r_steps=5)
        assert dropped == [0.001]
        assert all(r >= 2e-5 and r <= R for R, r in pairs)

    def test_decreasing_set_high_quasi_assouad(self, mt_gaps):
        D = decreasing_rearrangement(mt_gaps, 16)
        grid = np.logspace(-1.5, -3, 5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            est = empirical_slope_profile(D, DimensionFunction.theta(0.9), grid, r_steps=10,
                                          r_factor=0.7, max_centers=400)
        assert est.value > 0.8

    def test_lacunary_points_near_zero(self):
        gaps = GapSequence.from_values(0.5 ** np.arange(1, 61), tail=("geometric", 0.5))
        D = decreasing_rearrangement(gaps, 0, n_gaps=55, tail="point")
        est = empirical_phi_dim(D, DimensionFunction.constant(0.0), np.logspace(-1, -8, 8),
                                r_steps=20, r_factor=0.3)
        # log S grows like log log(R/r), so the fitted slope is small
        assert est.slope < 0.2

    def test_profile_has_no_scatter(self, mt_gaps):
        F = cantor_approximation(mt_gaps, 10)
        est = empirical_slope_profile(F, DimensionFunction.constant(0.0), [0.1], 6, 0.5)
        with pytest.raises(ValueError):
            list(est.scatter_rows())


@pytest.fixture(scope="module")
def pair(mt_gaps):
    return cantor_approximation(mt_gaps, 10), decreasing_rearrangement(mt_gaps, 10)


class TestInequalityChecks:
    def test_cantor_vs_decreasing(self, pair):
        C, D = pair
        rng = np.random.default_rng(0)
        floor = 2 * max(C.resolution, D.resolution)
        triples = []
        for _ in range(50):
            R = math.exp(rng.uniform(math.log(4 * floor), 0))
            triples.append((float(rng.choice(C.endpoints())), R,
                            math.exp(rng.uniform(math.log(floor), math.log(R)))))
        assert check_prop_dec(C, D, triples) == []

    def test_same_set_from_left(self, pair):
        _, D = pair
        triples = [(D.lo, R, R / 8) for R in np.logspace(-3, 0, 10)]
        assert check_prop_dec(D, D, triples) == []

    def test_detects_violation_with_unit_constant(self, pair):
        _, D = pair
        # evenly spaced points badly outnumber D near the origin
        E = FiniteApproximation.from_points(np.linspace(0, 1, 2001), source=dict(D.source))
        triples = [(0.5, 0.5, r) for r in (1e-2, 3e-3, 1e-3)]
        assert len(check_prop_dec(E, D, triples, constant=1.0)) == 3
        assert check_prop_dec(E, D, triples, constant=64.0) == []

    def test_lemma_box_cantor_decreasing(self, pair):
        C, D = pair
        radii = 3.0 ** -np.arange(1, 9)
        assert check_lemma_box(C, D, radii) == []

    def test_lemma_box_identity(self, pair):
        C, _ = pair
        radii = np.logspace(-3, 0, 7)
        assert check_lemma_box(C, C, radii) == []
        assert lemma_box_ratios(C, C, radii) == [1.0] * 7

    def test_lemma_box_random_pairs(self, mt_gaps):
        sets = [random_rearrangement(mt_gaps, s, 8).materialize() for s in range(20)]
        radii = np.logspace(math.log10(2 * sets[0].resolution), 0, 8)
        for F, G in itertools.combinations(sets, 2):
            assert check_lemma_box(F, G, radii) == []

    def test_incompatible_sources(self, mt_gaps):
        C = cantor_approximation(mt_gaps, 8)
        with pytest.raises(IncompatibleSources):
            check_lemma_box(C, cantor_approximation(mt_gaps, 9), [0.1])
        other = cantor_approximation(middle_third_gaps(30), 8)
        with pytest.raises(IncompatibleSources):
            check_prop_dec(C, other, [(0.0, 0.5, 0.1)])
