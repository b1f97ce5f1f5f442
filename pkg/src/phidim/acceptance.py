"""End-to-end acceptance checks shared by the test suite and ``phidim verify``.

Each check returns a Result with a pass flag and the numbers behind it. A
check that cannot be met at the stated scale still runs to completion and
reports FAIL with the reason in ``detail``.
"""
from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .constructors import (StepTarget, cantor_approximation, claim_ratios, contfailure_schedule,
                           decreasing_example_log_gaps, decreasing_example_phi,
                           decreasing_example_set, decreasing_rearrangement, middle_third_gaps,
                           minimal_continuum_levels, continuum_schedule, random_rearrangement,
                           thm5_block_arrangement, thm_diff_schedule)
from .core import (LOG2, DimensionFunction, RatioSchedule, depth_table, level_sums,
                   level_sums_from_ratios)
from .errors import BudgetExceeded, EmptyScan
from .estimators import (ScanWindow, assouad, box_dims_cantor, lower_phi_dim, phi_dim,
                         quasi_assouad, upper_phi_dim)
from .oracle import (FiniteApproximation, check_lemma_box, check_prop_dec, covering_number,
                     empirical_phi_dim, empirical_slope_profile, packing_number)

LOG3 = math.log(3.0)


@dataclass
class Result:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        bits = ", ".join(f"{k}={_short(v)}" for k, v in self.detail.items())
        return f"{status} [{self.number}] {self.name} ({self.seconds:.1f}s): {bits}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)) and len(v) > 6:
        return f"[{len(v)} items]"
    return str(v)


def _timed(number, name):
    def wrap(fn):
        def run(*a, **kw):
            t = time.perf_counter()
            passed, detail = fn(*a, **kw)
            return Result(number, name, bool(passed), detail, time.perf_counter() - t)
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


def five_phis():
    return [DimensionFunction.constant(0.0), DimensionFunction.constant(1.0),
            DimensionFunction.power_log(0.5), DimensionFunction.loglog(),
            DimensionFunction.reciprocal_log(1.0)]


# ---------------------------------------------------------------- 1

@_timed(1, "middle-third closed form")
def middle_third_closed_form(N=2000):
    stats = level_sums(middle_third_gaps(40), N)
    target = LOG2 / LOG3
    errs = {}
    for phi in five_phis():
        dt = depth_table(phi, stats)
        up = upper_phi_dim(stats, dt).value
        lo = lower_phi_dim(stats, dt).value
        errs[phi.label()] = max(abs(up - target), abs(lo - target))
    worst = max(errs.values())
    return worst <= 1e-9, {"max_error": worst}


# ---------------------------------------------------------------- 2

@_timed(2, "separating two dimension functions")
def separation(N=20_000):
    phi2 = DimensionFunction.power_log(0.5)
    phi1 = phi2.scaled(2.0)
    rep = thm_diff_schedule(phi1, phi2, None, 0.4, 1.0, N=N)
    stats = rep.stats()
    w = ScanWindow(**rep.extra["window"])
    e2 = phi_dim(stats, phi2, w).value
    e1 = phi_dim(stats, phi1, w).value
    ok2 = abs(e2 - rep.targets["phi2_dim"]) <= 1e-6
    ok1 = e1 <= rep.targets["phi1_bound"] + 1e-6
    return ok1 and ok2 and N <= 100_000, {
        "phi2_estimate": e2, "phi2_target": rep.targets["phi2_dim"],
        "phi1_estimate": e1, "phi1_bound": rep.targets["phi1_bound"], "N": N}


# ---------------------------------------------------------------- 3

CONTINUUM_TARGET = StepTarget((0.34, 0.67, 1.0), (0.7, 0.6, 0.5))
CONTINUUM_SAMPLES = ("1/4", "1/2", "3/4")


@_timed(3, "continuum of values")
def continuum(N=100_000, alpha=0.45, beta=0.75):
    detail = {"N": N}
    try:
        rep = continuum_schedule(CONTINUUM_TARGET, alpha, beta, CONTINUUM_SAMPLES, N=N)
    except BudgetExceeded as exc:
        detail["error"] = "BudgetExceeded"
        detail["levels_needed"] = minimal_continuum_levels(
            CONTINUUM_TARGET, alpha, beta, CONTINUUM_SAMPLES)
        detail["levels_needed_pinned"] = minimal_continuum_levels(
            CONTINUUM_TARGET, alpha, beta, CONTINUUM_SAMPLES, pin_quasi_assouad=True)
        detail["message"] = str(exc).split(";")[0]
        return False, detail
    stats = rep.stats()
    ok = True
    for q in CONTINUUM_SAMPLES:
        est = phi_dim(stats, DimensionFunction.power_log(float(Fraction(q)))).value
        detail[f"dim_{q}"] = est
        ok &= abs(est - rep.targets[q]) <= 0.02
    pinned = continuum_schedule(CONTINUUM_TARGET, alpha, beta, CONTINUUM_SAMPLES, N=N,
                                pin_quasi_assouad=True)
    qa = quasi_assouad(pinned.stats(), np.linspace(0.5, 0.95, 10)).value
    detail["quasi_assouad"] = qa
    return ok and abs(qa - alpha) <= 0.02, detail


# ---------------------------------------------------------------- 4

@_timed(4, "failure of continuity")
def continuity_failure(N=100_000):
    phi = DimensionFunction.power_log(0.9)
    rep = contfailure_schedule(phi, N=N)
    stats = rep.stats()
    w = ScanWindow(max(1, rep.blocks[0]["n"] // 2), N // 2, N - N // 2)
    dim_a = assouad(stats, w).value
    detail = {"assouad": dim_a, "blocks": len(rep.blocks)}
    ok = abs(dim_a - LOG2 / LOG3) <= 1e-6
    bound = LOG2 / math.log(9.0)
    for k in (1, 2, 4, 8):
        v = phi_dim(stats, phi.scaled(1.0 / k), w).value
        detail[f"phi_over_{k}"] = v
        ok &= v <= bound + 1e-6
    return ok, detail


# ---------------------------------------------------------------- 5

@_timed(5, "decreasing example")
def decreasing_example(n_max=10**6, n_points=10**5):
    log_gaps = decreasing_example_log_gaps(n_max)
    monotone = bool(np.all(np.diff(log_gaps) < 0))
    phi = decreasing_example_phi(n_max)
    n = np.arange(10**4, n_max + 1)
    prod = phi.of_log(-np.log(n) ** 2) * np.log(n)
    prod_ok = bool(np.all((prod >= 0.9) & (prod <= 1.1)))
    _, phi_small, approx, rep = decreasing_example_set(n_points)
    idx = np.unique(np.logspace(1, math.log10(3000), 25).astype(int))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = empirical_phi_dim(approx, phi_small, np.exp(-np.log(idx) ** 2),
                                max_centers=3000).value
    lo = rep.targets["lower_bound"] - 0.05
    hi = rep.targets["upper_bound"] + 0.05
    est_ok = lo <= est <= hi
    return monotone and prod_ok and est_ok, {
        "monotone_gaps": monotone, "phi_times_log_n_min": float(prod.min()),
        "phi_times_log_n_max": float(prod.max()), "estimate": est,
        "estimate_range": (lo, hi)}


# ---------------------------------------------------------------- 6

def exhaustive_cover(lefts, rights, lo, hi, r):
    """Optimal cover by trying every split into runs of consecutive intervals."""
    iv = [(max(a, lo), min(b, hi)) for a, b in zip(lefts, rights) if b >= lo and a <= hi]
    n = len(iv)
    if n == 0:
        return 0
    best = math.inf
    for cuts in itertools.product((False, True), repeat=n - 1):
        total, start = 0, 0
        for i in range(n):
            if i == n - 1 or cuts[i]:
                span = iv[i][1] - iv[start][0]
                total += max(1, math.ceil(span / (2 * r) - 1e-12))
                start = i + 1
        best = min(best, total)
    return best


def random_instance(rng, max_intervals=12):
    n = int(rng.integers(1, max_intervals + 1))
    x = np.sort(rng.uniform(0.0, 1.0, 2 * n))
    lefts, rights = x[0::2], x[1::2]
    if rng.random() < 0.3:
        rights = lefts.copy()
    return FiniteApproximation(lefts, rights)


@_timed(6, "oracle cross-validation")
def oracle_cross_validation(instances=200, seed=0):
    approx = cantor_approximation(middle_third_gaps(40), 14)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = empirical_phi_dim(approx, DimensionFunction.constant(0.0),
                                np.logspace(-1, -5, 9), r_steps=8, r_factor=0.5)
    slope_ok = abs(est.slope - LOG2 / LOG3) <= 0.05
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        F = random_instance(rng)
        z = rng.uniform(0, 1)
        R = rng.uniform(0.05, 1.0)
        r = rng.uniform(0.005, 0.3)
        if covering_number(F, z, R, r) != exhaustive_cover(F.lefts, F.rights, z - R, z + R, r):
            mismatches += 1
    return slope_ok and mismatches == 0, {"slope": est.slope, "mismatches": mismatches}


# ---------------------------------------------------------------- 7

def prop_dec_triples(E, D, rng, count):
    floor = 2 * max(E.resolution, D.resolution)
    z = rng.choice(E.endpoints(), size=count)
    logR = rng.uniform(math.log(4 * floor), 0.0, size=count)
    R = np.exp(logR)
    r = np.exp(rng.uniform(math.log(floor), logR))
    return list(zip(z.tolist(), R.tolist(), r.tolist()))


@_timed(7, "rearrangement inequalities")
def rearrangements(stage=10, n_arr=100, n_triples=50, n_box=20, n_radii=10, seed=0):
    gaps = middle_third_gaps(40)
    D = decreasing_rearrangement(gaps, stage)
    rng = np.random.default_rng(seed)
    dec_viol = 0
    for i in range(n_arr):
        E = random_rearrangement(gaps, seed * 1000 + i, stage).materialize()
        dec_viol += len(check_prop_dec(E, D, prop_dec_triples(E, D, rng, n_triples)))
    sets = [random_rearrangement(gaps, seed * 1000 + i, stage).materialize()
            for i in range(n_box)]
    floor = 2 * sets[0].resolution
    radii = np.logspace(math.log10(floor), 0, n_radii)
    box_viol = sum(len(check_lemma_box(F, G, radii))
                   for F, G in itertools.combinations(sets, 2))
    return dec_viol == 0 and box_viol == 0, {"prop_dec_violations": dec_viol,
                                             "lemma_box_violations": box_viol}


# ---------------------------------------------------------------- 8

BLOCK_SCHEDULE = (4, 12)


def claim_triples(rep, rng, per_set=150):
    out = []
    floor = 2 * rep.A_set.resolution
    for s in rep.sets:
        pts = s["offset"] + s["points"]
        for _ in range(per_set):
            z = float(rng.choice(pts))
            R = s["diameter"] * 10 ** rng.uniform(-3, 0.5)
            top = min(s["diameter"], R)
            r = top * 10 ** rng.uniform(-4, -0.2)
            if floor <= r < top:
                out.append((s["k"], z, R, r))
    return out


@_timed(8, "block construction")
def block_construction(d=0.75, seed=0):
    rep = thm5_block_arrangement(middle_third_gaps(40), d, BLOCK_SCHEDULE)
    viol = rep.audit["violations"]
    audits_ok = sum(viol.values()) == 0
    beta = rep.constants["beta"]
    R = [s["diameter"] * beta ** j for s in rep.sets for j in range(s["n"])]
    est = empirical_slope_profile(rep.A_set, DimensionFunction.theta(0.99), R, 20, beta,
                                  max_centers=600)
    rng = np.random.default_rng(seed)
    triples = claim_triples(rep, rng)
    ratios = claim_ratios(rep, triples, d)
    C = float(ratios.max())
    per_set = {f"C_{s['k']}": float(ratios[[t[0] == s["k"] for t in triples]].max())
               for s in rep.sets}
    holds = bool(np.all(ratios <= C))
    levels = max(s["m"] + s["rows"][-1]["i"] for s in rep.sets)
    ok = audits_ok and abs(est.value - d) <= 0.05 and holds and levels <= 30
    return ok, {"violations": sum(viol.values()), "estimate": est.value, "target": d,
                "fitted_C": C, **per_set, "triples": len(triples), "levels": levels}


# ---------------------------------------------------------------- 9

def random_schedule(rng, N=None):
    N = int(rng.integers(40, 160)) if N is None else N
    lo = rng.uniform(0.02, 0.3)
    hi = rng.uniform(lo, 0.49)
    return RatioSchedule(rng.uniform(lo, hi, size=N))


def random_phi(rng):
    kind = rng.integers(0, 4)
    if kind == 0:
        return DimensionFunction.constant(float(rng.uniform(0, 2)))
    if kind == 1:
        return DimensionFunction.power_log(float(rng.uniform(0.05, 0.95)))
    if kind == 2:
        return DimensionFunction.reciprocal_log(float(rng.uniform(0.1, 5)))
    return DimensionFunction.loglog()


def _property_pair_monotone(rng):
    stats = level_sums_from_ratios(random_schedule(rng))
    phi = random_phi(rng)
    bigger = phi.scaled(1.0 + float(rng.uniform(0.1, 3)))
    w = ScanWindow.default(stats.N)
    d1, d2 = depth_table(phi, stats), depth_table(bigger, stats)
    # an unresolved depth counts as deeper than any resolved one
    deep1 = np.where(d1.phi < 0, np.iinfo(np.int64).max, d1.phi)
    deep2 = np.where(d2.phi < 0, np.iinfo(np.int64).max, d2.phi)
    if np.any(deep1 > deep2):
        return False
    try:
        u2 = upper_phi_dim(stats, d2, w).value
        l2 = lower_phi_dim(stats, d2, w).value
    except EmptyScan:
        return True  # no admissible pair for the larger function
    return (upper_phi_dim(stats, d1, w).value >= u2 - 1e-12
            and lower_phi_dim(stats, d1, w).value <= l2 + 1e-12)


def _property_lower_le_upper(rng):
    stats = level_sums_from_ratios(random_schedule(rng))
    dt = depth_table(random_phi(rng), stats)
    try:
        return lower_phi_dim(stats, dt).value <= upper_phi_dim(stats, dt).value + 1e-12
    except EmptyScan:
        return True


def _property_box_sandwich(rng):
    ratio = float(rng.uniform(0.01, 0.49))
    stats = level_sums_from_ratios(RatioSchedule(np.full(int(rng.integers(40, 200)), ratio)))
    dt = depth_table(random_phi(rng), stats)
    w = ScanWindow.default(stats.N)
    lo, hi, _ = box_dims_cantor(stats, w)
    lower = lower_phi_dim(stats, dt, w).value
    upper = upper_phi_dim(stats, dt, w).value
    tol = 1e-9
    return lower <= lo + tol and lo <= hi + tol and hi <= upper + tol


def _property_covering(rng):
    F = random_instance(rng, 20)
    G = random_instance(rng, 20)
    z = float(rng.uniform(0, 1))
    R = float(rng.uniform(0.05, 1))
    r = float(rng.uniform(0.002, 0.2))
    n = covering_number(F, z, R, r)
    mono_r = covering_number(F, z, R, 2 * r) <= n
    mono_R = n <= covering_number(F, z, 2 * R, r)
    union = F.union(G)
    sub = covering_number(union, z, R, r) <= n + covering_number(G, z, R, r)
    inside = covering_number(union, z, R, r) >= n
    return mono_r and mono_R and sub and inside


def _property_pack_cover(rng):
    F = random_instance(rng, 20)
    z = float(rng.uniform(0, 1))
    R = float(rng.uniform(0.05, 1))
    r = float(rng.uniform(0.002, 0.2))
    P = packing_number(F, z, R, r)
    # N_r / M <= P_r <= M N_(r/2) with M = 2, plus the sharper N_2r <= P_r <= N_r
    n_r = covering_number(F, z, R, r)
    loose = n_r / 2 <= P <= 2 * covering_number(F, z, R, r / 2)
    return loose and covering_number(F, z, R, 2 * r) <= P <= n_r


def _property_depth_shift(rng):
    stats = level_sums_from_ratios(random_schedule(rng))
    phi = depth_table(random_phi(rng), stats).phi
    reach = np.arange(phi.size) + phi
    ok = phi >= 0
    # n + phi(n) is non-decreasing over resolved levels (m >= 1)
    r = reach[ok]
    return bool(np.all(np.diff(r) >= 0)) and bool(np.all(np.diff(np.flatnonzero(ok)) >= 1))


def _property_depth_bracket(rng):
    sched = random_schedule(rng)
    stats = level_sums_from_ratios(sched)
    tau, rho = float(sched.ratios.min()), float(sched.ratios.max())
    fn = random_phi(rng)
    dt = depth_table(fn, stats)
    n = np.arange(1, dt.phi.size)
    phi = dt.phi[1:]
    keep = phi >= 0
    n, phi = n[keep], phi[keep].astype(np.float64)
    val = fn.of_log(stats.log_s[n])
    A = math.log(rho) / math.log(tau)
    B = math.log(tau) / math.log(rho)
    tol = 1e-9 * (1 + val)
    return bool(np.all((phi - 1) / n * A <= val + tol) and np.all(val <= phi / n * B + tol))


PROPERTIES = {
    "pair_set_monotonicity": _property_pair_monotone,
    "lower_le_upper": _property_lower_le_upper,
    "box_sandwich": _property_box_sandwich,
    "covering_monotone_subadditive": _property_covering,
    "packing_covering_comparable": _property_pack_cover,
    "depth_shift": _property_depth_shift,
    "depth_bracket": _property_depth_bracket,
}


@_timed(9, "property suites")
def properties(instances=1000, seed=0):
    detail = {}
    for i, (name, prop) in enumerate(PROPERTIES.items()):
        rng = np.random.default_rng([seed, i])
        detail[name] = sum(0 if prop(rng) else 1 for _ in range(instances))
    return all(v == 0 for v in detail.values()), detail


CRITERIA = [middle_third_closed_form, separation, continuum, continuity_failure,
            decreasing_example, oracle_cross_validation, rearrangements,
            block_construction, properties]


def run_all(only=None):
    for fn in CRITERIA:
        if only is None or fn.__name__ in only:
            yield fn()
