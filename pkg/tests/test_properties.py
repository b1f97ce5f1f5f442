"""Randomised invariants, driven by hypothesis."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from phidim import _kernels
from phidim.constructors import cantor_approximation, random_rearrangement
from phidim.core import (DimensionFunction, GapSequence, RatioSchedule, depth_table,
                         level_sums, level_sums_from_ratios)
from phidim.errors import EmptyScan
from phidim.estimators import ScanWindow, box_dims_cantor, lower_phi_dim, upper_phi_dim
from phidim.oracle import FiniteApproximation, covering_number, packing_number

PROFILE = settings(max_examples=300, deadline=None, derandomize=True,
                   suppress_health_check=[HealthCheck.too_slow])

ratio = st.floats(0.01, 0.49, allow_nan=False)


@st.composite
def schedules(draw, min_size=40, max_size=160):
    lo = draw(st.floats(0.01, 0.3))
    hi = draw(st.floats(lo, 0.49))
    n = draw(st.integers(min_size, max_size))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return RatioSchedule(np.random.default_rng(seed).uniform(lo, hi, n))


dimension_functions = st.one_of(
    st.floats(0, 2).map(DimensionFunction.constant),
    st.floats(0.05, 0.95).map(DimensionFunction.power_log),
    st.floats(0.1, 5).map(DimensionFunction.reciprocal_log),
    st.just(DimensionFunction.loglog()),
)


@st.composite
def interval_sets(draw, max_pieces=20):
    n = draw(st.integers(1, max_pieces))
    x = np.sort(np.array(draw(st.lists(st.floats(0, 1), min_size=2 * n, max_size=2 * n))))
    lefts, rights = x[0::2], x[1::2]
    if draw(st.booleans()):
        rights = lefts.copy()
    keep = np.r_[True, lefts[1:] > rights[:-1]]
    return FiniteApproximation(lefts[keep], rights[keep])


balls = st.tuples(st.floats(0, 1), st.floats(0.01, 1), st.floats(0.002, 0.3))


def scan_both(stats, depth, w):
    try:
        return upper_phi_dim(stats, depth, w).value, lower_phi_dim(stats, depth, w).value
    except EmptyScan:
        return None


@PROFILE
@given(schedules(), dimension_functions, st.floats(1.1, 4))
def test_larger_function_shrinks_the_pair_set(sched, fn, factor):
    stats = level_sums_from_ratios(sched)
    w = ScanWindow.default(stats.N)
    small, big = depth_table(fn, stats), depth_table(fn.scaled(factor), stats)
    # unresolved depth counts as infinitely deep
    deep = np.iinfo(np.int64).max
    shallow = np.where(small.phi < 0, deep, small.phi)
    assert np.all(shallow <= np.where(big.phi < 0, deep, big.phi))
    narrow = scan_both(stats, big, w)
    assume(narrow is not None)
    wide = scan_both(stats, small, w)
    assert wide[0] >= narrow[0] - 1e-12
    assert wide[1] <= narrow[1] + 1e-12


@PROFILE
@given(schedules(), dimension_functions)
def test_lower_never_exceeds_upper(sched, fn):
    stats = level_sums_from_ratios(sched)
    vals = scan_both(stats, depth_table(fn, stats), ScanWindow.default(stats.N))
    assume(vals is not None)
    assert vals[1] <= vals[0] + 1e-12


@PROFILE
@given(ratio, st.integers(40, 200), dimension_functions)
def test_box_values_sit_between_lower_and_upper(r, N, fn):
    stats = level_sums_from_ratios(RatioSchedule(np.full(N, r)))
    depth = depth_table(fn, stats)
    w = ScanWindow.default(N)
    vals = scan_both(stats, depth, w)
    assume(vals is not None)
    lo, hi, _ = box_dims_cantor(stats, w)
    assert vals[1] - 1e-9 <= lo <= hi <= vals[0] + 1e-9


@PROFILE
@given(schedules(), dimension_functions)
def test_reach_of_depth_is_monotone(sched, fn):
    stats = level_sums_from_ratios(sched)
    phi = depth_table(fn, stats).phi
    ok = phi >= 0
    reach = (np.arange(phi.size) + phi)[ok]
    assert np.all(np.diff(reach) >= 0)


@PROFILE
@given(schedules(), dimension_functions)
def test_depth_bracket(sched, fn):
    stats = level_sums_from_ratios(sched)
    tau, rho = float(sched.ratios.min()), float(sched.ratios.max())
    phi = depth_table(fn, stats).phi[1:]
    n = np.arange(1, phi.size + 1)
    keep = phi >= 0
    n, phi = n[keep], phi[keep].astype(float)
    val = fn.of_log(stats.log_s[n])
    A = math.log(rho) / math.log(tau)
    B = math.log(tau) / math.log(rho)
    tol = 1e-9 * (1 + val)
    assert np.all((phi - 1) / n * A <= val + tol)
    assert np.all(val <= phi / n * B + tol)


@PROFILE
@given(st.lists(st.floats(0.05, 0.95), min_size=4, max_size=16), st.floats(0.05, 0.45))
def test_level_sums_obey_doubling(block_ratios, tail):
    la = np.cumsum(np.log(block_ratios))
    gaps = GapSequence.from_blocks(log_alphas=la, tail_ratio=tail)
    N = la.size + 3
    s = np.exp(level_sums(gaps, N).log_s)
    j = np.arange(1, 2 ** (N - 1))
    kappa = float(np.max(gaps.terms(j) / gaps.terms(2 * j)))
    assert np.all(s[:-1] <= (2 + kappa ** 2) * s[1:] * (1 + 1e-12))


@PROFILE
@given(interval_sets(), interval_sets(), balls)
def test_covering_monotone_and_subadditive(F, G, ball):
    z, R, r = ball
    n = covering_number(F, z, R, r)
    assert covering_number(F, z, R, 2 * r) <= n <= covering_number(F, z, R, r / 2)
    assert n <= covering_number(F, z, 2 * R, r)
    U = F.union(G)
    assert n <= covering_number(U, z, R, r) <= n + covering_number(G, z, R, r)


@PROFILE
@given(interval_sets(), balls)
def test_packing_and_covering_comparable(F, ball):
    z, R, r = ball
    P = packing_number(F, z, R, r)
    n = covering_number(F, z, R, r)
    assert n / 2 <= P <= 2 * covering_number(F, z, R, r / 2)
    assert covering_number(F, z, R, 2 * r) <= P <= n


@settings(max_examples=60, deadline=None, derandomize=True)
@given(st.integers(0, 10 ** 6), st.integers(3, 9))
def test_random_rearrangement_conserves_gaps(seed, stage):
    gaps = GapSequence.from_blocks(log_alphas=-(np.arange(30) + 1.0) * math.log(3),
                                   tail_ratio=1 / 3)
    F = random_rearrangement(gaps, seed, stage).materialize()
    C = cantor_approximation(gaps, stage)
    inner = F.lefts[1:] - F.rights[:-1]
    np.testing.assert_allclose(np.sort(inner), np.sort(gaps.prefix(2 ** stage - 1)), rtol=1e-9)
    assert F.measure == pytest.approx(C.measure, rel=1e-9)
    assert F.hi == pytest.approx(C.hi, rel=1e-12)


needs_numba = pytest.mark.skipif(_kernels.BACKEND != "numba", reason="numba not importable")


@needs_numba
@PROFILE
@given(schedules(), dimension_functions)
def test_backends_agree_on_level_scans(sched, fn):
    stats = level_sums_from_ratios(sched)
    thr = fn.threshold(stats.log_s[:-1])
    thr = np.where(np.isfinite(thr), thr, -np.inf)
    a = _kernels.depth_scan(stats.log_s, thr, backend="numba")
    b = _kernels.depth_scan(stats.log_s, thr, backend="numpy")
    assert np.array_equal(a, b)
    w = ScanWindow.default(stats.N)
    for upper in (True, False):
        va, na = _kernels.beta_rows(stats.log_s, a, w.k0, w.K, w.n_max, upper, "numba")
        vb, nb = _kernels.beta_rows(stats.log_s, a, w.k0, w.K, w.n_max, upper, "numpy")
        np.testing.assert_array_equal(va, vb)
        np.testing.assert_array_equal(na, nb)


@needs_numba
@PROFILE
@given(interval_sets(), balls)
def test_backends_agree_on_counts(F, ball):
    z, R, r = ball
    lo, hi = z - R, z + R
    for fn in (_kernels.cover_count, _kernels.pack_count):
        assert fn(F.lefts, F.rights, lo, hi, r, "numba") == fn(F.lefts, F.rights, lo, hi, r,
                                                               "numpy")
    centres = np.linspace(0, 1, 7)
    np.testing.assert_array_equal(
        _kernels.cover_counts(F.lefts, F.rights, centres, R, r, "numba"),
        _kernels.cover_counts(F.lefts, F.rights, centres, R, r, "numpy"))
