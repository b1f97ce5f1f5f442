"""Explicit set constructions: gap sequences, ratio schedules and arrangements.

Each schedule builder returns a ConstructionReport. Its ``segments`` partition
the level range 1..N and say which rule set each level's ratio. Construction
constants are computed from the inequalities they must satisfy, and the
sparse block positions are the smallest values that satisfy all of them.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (LOG2, DimensionFunction, GapSequence, RatioSchedule, depth_table,
                   level_sums, level_sums_from_ratios)
from .errors import (BudgetExceeded, GapBudgetExceeded, HypothesisViolated,
                     ResolutionExceeded)
from .estimators import box_dim_decreasing
from .oracle import FiniteApproximation, covering_number

MIN_INTERVAL = 1e-13
MAX_INTERVALS = 1 << 22


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


@dataclass
class ConstructionReport:
    kind: str
    schedule: RatioSchedule | None = None
    arrangement: "Arrangement | None" = None
    segments: list = field(default_factory=list)
    blocks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.schedule.N if self.schedule is not None else None

    def level_rules(self):
        """Per-level rule labels expanded from the segments (index 0 is level 1)."""
        out = [None] * (self.N or 0)
        for seg in self.segments:
            for lev in range(seg["start"], seg["end"] + 1):
                if out[lev - 1] is not None:
                    raise ValueError(f"level {lev} assigned twice")
                out[lev - 1] = seg["rule"]
        return out

    def stats(self):
        return level_sums_from_ratios(self.schedule)

    def to_dict(self):
        d = {
            "kind": self.kind,
            "segments": self.segments,
            "blocks": self.blocks,
            "constants": self.constants,
            "targets": self.targets,
            "audit": self.audit,
        }
        if self.schedule is not None:
            d["schedule"] = self.schedule.to_dict()
        if self.arrangement is not None:
            d["arrangement"] = self.arrangement.describe()
        d.update(self.extra)
        return _jsonable(d)


def _segments_from_labels(labels):
    """Run-length encode per-level labels (level numbering starts at 1)."""
    segs = []
    start = 1
    for i in range(1, len(labels) + 1):
        if i == len(labels) or labels[i] != labels[start - 1]:
            segs.append({"start": start, "end": i, "rule": labels[start - 1]})
            start = i + 1
    return segs


# ---------------------------------------------------------------- gap sequences

def middle_third_gaps(n_blocks=40) -> GapSequence:
    """a_i = 3^-n for 2^(n-1) <= i <= 2^n - 1, continued geometrically past n_blocks."""
    if n_blocks < 1:
        raise ValueError("need at least one block")
    log_alpha = -(np.arange(n_blocks) + 1.0) * math.log(3.0)
    return GapSequence.from_blocks(log_alphas=log_alpha, tail_ratio=1.0 / 3.0)


def gaps_from_stats(stats, n_blocks):
    """Block gaps alpha_k = s_k - 2 s_(k+1) of a central Cantor set, k < n_blocks.

    Past the last block the gaps continue geometrically with the last ratio,
    which perturbs s_k only by the mass beyond level n_blocks.
    """
    M = min(int(n_blocks), stats.N)
    ls = stats.log_s
    ratios = np.exp(np.diff(ls[: M + 1]))
    log_alpha = ls[:M] + np.log1p(-2.0 * ratios)
    return GapSequence.from_blocks(log_alphas=log_alpha, tail_ratio=float(ratios[-1]))


def gap_fingerprint(gaps: GapSequence) -> str:
    blob = json.dumps(_jsonable(gaps.to_dict()), sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:16]


# ---------------------------------------------------------------- arrangements

def _tree_gaps(gaps, stage):
    """Gap lengths in tree order: row k holds a_{2^k}, ..., a_{2^(k+1)-1}."""
    return [gaps.terms(np.arange(2 ** k, 2 ** (k + 1))) for k in range(stage)]


def _leaf_lengths(gaps, stage):
    """Length of each step-`stage` interval of the canonical Cantor layout."""
    if gaps.kind == "blocks":
        s = math.exp(level_sums(gaps, stage).log_s[stage])
        return np.full(2 ** stage, s)
    # explicit: subtree sums of the known part, unknown tail shared equally
    depth = max(stage, int(math.ceil(math.log2(gaps.n_known + 1))))
    lengths = np.zeros(2 ** depth)
    if gaps.infinite:
        lengths += math.exp(gaps.log_tail_sum(2 ** depth)) / 2 ** depth
    rows = _tree_gaps(gaps, depth)
    for k in range(depth - 1, stage - 1, -1):
        lengths = lengths[0::2] + rows[k] + lengths[1::2]
    return lengths


def _cantor_lefts(rows, leaf):
    """Left endpoints of the leaves given the tree gaps and leaf lengths."""
    stage = len(rows)
    lengths = [None] * (stage + 1)
    lengths[stage] = leaf
    for k in range(stage - 1, -1, -1):
        ch = lengths[k + 1]
        lengths[k] = ch[0::2] + rows[k] + ch[1::2]
    lefts = np.zeros(1)
    for k in range(stage):
        left_child = lengths[k + 1][0::2]
        nxt = np.empty(2 * lefts.size)
        nxt[0::2] = lefts
        nxt[1::2] = lefts + left_child + rows[k]
        lefts = nxt
    return lefts


def _check_stage(stage, smallest):
    if 2 ** stage > MAX_INTERVALS:
        raise ResolutionExceeded(
            f"stage {stage} would materialise more than {MAX_INTERVALS} intervals")
    if smallest <= MIN_INTERVAL:
        raise ResolutionExceeded(f"stage {stage} has intervals of length {smallest:.3g} <= {MIN_INTERVAL}")


def _interleave(survivors, gap_order):
    """Lay out survivor, gap, survivor, ... from 0 and return the survivor intervals."""
    n = survivors.size
    steps = np.empty(2 * n - 1)
    steps[0::2] = survivors
    steps[1::2] = gap_order
    starts = np.concatenate(([0.0], np.cumsum(steps)))[0::2]
    return starts, starts + survivors


@dataclass(frozen=True, eq=False)
class Arrangement:
    """An ordering of the gaps of a sequence inside [0, total mass].

    descriptor is one of ``cantor_tree``, ``decreasing``, ``explicit_order`` or
    ``block_tree``. Explicit orders hold a permutation of the first 2^stage - 1
    gaps. Block trees carry a prebuilt approximation.
    """

    descriptor: str
    gaps: GapSequence
    rng_seed: int | None = None
    order: np.ndarray | None = None
    stage: int | None = None
    prebuilt: FiniteApproximation | None = None

    def describe(self):
        d = {"descriptor": self.descriptor, "gaps": gap_fingerprint(self.gaps)}
        if self.rng_seed is not None:
            d["rng_seed"] = self.rng_seed
        if self.stage is not None:
            d["stage"] = self.stage
        return d

    def materialize(self, stage=None) -> FiniteApproximation:
        stage = self.stage if stage is None else stage
        src = {"gaps": gap_fingerprint(self.gaps), "stage": stage, "arrangement": self.descriptor}
        if self.descriptor == "block_tree":
            return self.prebuilt
        if self.descriptor == "cantor_tree":
            leaf = _leaf_lengths(self.gaps, stage)
            _check_stage(stage, float(leaf.min()))
            lefts = _cantor_lefts(_tree_gaps(self.gaps, stage), leaf)
            return FiniteApproximation(lefts, lefts + leaf, stage, src, float(leaf.min()))
        if self.descriptor == "decreasing":
            return decreasing_rearrangement(self.gaps, stage)
        if self.descriptor == "explicit_order":
            leaf = _leaf_lengths(self.gaps, stage)
            _check_stage(stage, float(leaf.min()))
            placed = self.gaps.prefix(2 ** stage - 1)
            lefts, rights = _interleave(leaf, placed[self.order])
            return FiniteApproximation(lefts, rights, stage, src, float(leaf.min()))
        raise ValueError(f"unknown arrangement {self.descriptor!r}")


def cantor_arrangement(gaps, stage):
    return Arrangement("cantor_tree", gaps, stage=stage)


def cantor_approximation(gaps, stage) -> FiniteApproximation:
    """The canonical Cantor layout after `stage` steps of gap removal."""
    return cantor_arrangement(gaps, stage).materialize()


def decreasing_rearrangement(gaps: GapSequence, stage: int, tail="interval",
                             n_gaps=None) -> FiniteApproximation:
    """Points 1, 1 - a_1, 1 - a_1 - a_2, ... after 2^stage - 1 gaps (or `n_gaps`).

    What remains below the last point is the accumulation region [0, T] with T
    the unplaced mass. ``tail="interval"`` keeps it as a solid interval, which
    is faithful for radii above the largest unplaced gap; ``tail="point"``
    keeps only the accumulation point 0.
    """
    count = 2 ** stage - 1 if n_gaps is None else int(n_gaps)
    placed = gaps.prefix(count)
    if gaps.kind == "blocks":
        total = gaps.total_mass
        T = total - float(np.sum(placed))
        T = max(T, 0.0)
    else:
        T = math.exp(gaps.log_tail_sum(count + 1))
        total = T + float(np.sum(placed))
    points = total - np.concatenate(([0.0], np.cumsum(placed)))
    points = points[::-1]
    resolution = float(gaps.terms([count + 1])[0])
    lefts = points.copy()
    rights = points.copy()
    if tail == "interval" and T > 0:
        lefts = np.concatenate(([0.0], lefts[1:]))
        rights = np.concatenate(([T], rights[1:]))
    elif tail == "point" and T > 0:
        lefts = np.concatenate(([0.0], lefts))
        rights = np.concatenate(([0.0], rights))
    src = {"gaps": gap_fingerprint(gaps), "stage": stage, "arrangement": "decreasing"}
    return FiniteApproximation(lefts, rights, stage, src, resolution)


def random_rearrangement(gaps: GapSequence, seed: int, stage: int) -> Arrangement:
    """Uniformly random left-to-right order of the first 2^stage - 1 gaps."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(2 ** stage - 1)
    return Arrangement("explicit_order", gaps, rng_seed=int(seed), order=order, stage=stage)


# ---------------------------------------------------------------- decreasing example

def decreasing_example_log_gaps(n_max):
    """log(x_n - x_(n+1)) for x_n = n^(-ln n), n = 1..n_max, without cancellation."""
    n = np.arange(1, n_max + 1, dtype=np.float64)
    ln = np.log(n)
    step = np.log1p(1.0 / n) * (np.log(n + 1.0) + ln)  # ln^2(n+1) - ln^2(n)
    return -ln * ln + np.log(-np.expm1(-step))


def decreasing_example_phi(n_max) -> DimensionFunction:
    """Phi(x) = Phi(x_n) on (x_(n+1), x_n], n = 2..n_max, from
    x_n^(1 + Phi(x_n)) = 2 (4n)^-(1 + ln 4n) ln(4n)."""
    n = np.arange(2, n_max + 1, dtype=np.float64)
    log_x = -np.log(n) ** 2
    l4 = np.log(4.0 * n)
    log_rhs = LOG2 - (1.0 + l4) * l4 + np.log(l4)
    phi = log_rhs / log_x - 1.0
    return DimensionFunction.piecewise_on_levels(log_x, phi)


def decreasing_example_set(n_points):
    """Points x_n = n^(-ln n), n = 1..n_points, with the matching Phi and bounds.

    The accumulation region below x_(n_points) is kept as the interval
    [0, x_(n_points)], so the resolution is the last listed gap.
    """
    if n_points < 2:
        raise ValueError("need at least two points")
    n = np.arange(1, n_points + 1, dtype=np.float64)
    x = np.exp(-np.log(n) ** 2)[::-1]
    last_gap = math.exp(decreasing_example_log_gaps(n_points)[-1])
    lefts = np.concatenate(([0.0], x[1:]))
    rights = x.copy()
    approx = FiniteApproximation(lefts, rights, n_points, {"example": "decreasing"},
                                 last_gap)
    phi = decreasing_example_phi(n_points)
    report = ConstructionReport(
        kind="decreasing_example",
        constants={"n_points": n_points, "log": "natural"},
        targets={
            "lower_bound": 1.0 / (1.0 + 2.0 * math.log(4.0)),
            "upper_bound": 1.0 / (1.0 + math.log(3.0)),
        },
    )
    return x[::-1], phi, approx, report


# ---------------------------------------------------------------- helpers

def _first_level(pred, start, limit):
    """Smallest n in [start, limit] with pred(n') true for every n' in [n, limit].

    pred is evaluated on all levels at once, so the scan is exact on the range.
    """
    n = np.arange(start, limit + 1)
    ok = np.asarray(pred(n), dtype=bool)
    if ok.size == 0 or not ok[-1]:
        return None
    bad = np.flatnonzero(~ok)
    return int(n[bad[-1] + 1]) if bad.size else int(start)


def _depth_len(phi_fn, log_s, log_ratio):
    """Least l >= 0 with l * log_ratio <= Phi(s) log s (same tie rule as depth tables)."""
    target = float(phi_fn.of_log(log_s)) * log_s
    if not math.isfinite(target):
        raise HypothesisViolated("dimension function undefined at a construction level")
    tol = 1e-12 * max(1.0, abs(log_s + target))
    ell = max(0, math.ceil(target / log_ratio - 1e-9))
    while ell > 0 and (ell - 1) * log_ratio <= target + tol:
        ell -= 1
    while ell * log_ratio > target + tol:
        ell += 1
    return ell


# ---------------------------------------------------------------- separating two functions

def separation_epsilon(xi):
    """Largest eps with ((1 - eps)/(1 + eps))^2 (1 + xi) >= 1 + xi/2."""
    q = math.sqrt((1.0 + xi / 2.0) / (1.0 + xi))
    return (1.0 - q) / (1.0 + q)


def thm_diff_schedule(phi1: DimensionFunction, phi2: DimensionFunction, tau, rho, xi,
                      n1=None, N=100_000) -> ConstructionReport:
    """Ratios tau everywhere except rho on n_j+1..n_j+l_j.

    l_j is the least integer with rho^l_j <= s_(n_j)^Phi2(s_(n_j)), n_(j+1) = 16 n_j,
    and n_1 = 8 max(N_0, N_1) unless a larger n1 is given. With this schedule
    the Phi2 estimate is log 2/|log rho| while the Phi1 estimate stays below
    log 2/|log sigma|, sigma = rho^(1/(1+xi/2)) tau^(xi/(2+xi)).
    """
    if xi <= 0:
        raise HypothesisViolated("xi must be positive")
    if not 0 < rho < 0.5:
        raise HypothesisViolated("rho must lie in (0, 1/2)")
    eps = separation_epsilon(xi)
    if tau is None:
        tau = rho ** (1.0 + eps)
    if not 0 < tau < rho:
        raise HypothesisViolated("need 0 < tau < rho")
    lt, lr = math.log(tau), math.log(rho)
    if lt / lr > 1.0 + eps + 1e-12:
        raise HypothesisViolated(
            f"|log tau / log rho| = {lt / lr:.6g} exceeds 1 + eps = {1 + eps:.6g} for xi = {xi}")

    def phis(u):
        return phi1.of_log(u), phi2.of_log(u)

    big = (1.0 + eps) / eps
    small = eps * (1.0 - eps) / (1.0 + eps)

    def n0_pred(n):
        u = n * lt
        f1, f2 = phis(u)
        return (n * f1 >= big) & (n * f2 >= big)

    def n1_pred(n):
        u = n * lr
        f1, f2 = phis(u)
        return (f1 <= small) & (f2 <= small)

    N0 = _first_level(n0_pred, 1, N)
    N1 = _first_level(n1_pred, 1, N)
    if N0 is None or N1 is None:
        raise BudgetExceeded(f"the thresholds N_0, N_1 are not reached within {N} levels")
    n_first = 8 * max(N0, N1)
    if n1 is not None:
        if n1 < n_first:
            raise HypothesisViolated(f"n1 = {n1} is below 8 max(N_0, N_1) = {n_first}")
        n_first = int(n1)

    # domination Phi1 >= (1 + xi) Phi2 on every level the construction can reach
    u = np.linspace(n_first * lr * 0.5, N * lt, 4096)
    f1, f2 = phis(u)
    if np.any(f1 < (1.0 + xi) * f2 * (1 - 1e-12)):
        raise HypothesisViolated("Phi1 >= (1 + xi) Phi2 fails on the construction range")

    labels = ["tau"] * N
    blocks = []
    log_s = 0.0
    pos = 0
    nj = n_first
    while True:
        if nj > N:
            break
        log_s += (nj - pos) * lt
        ell = _depth_len(phi2, log_s, lr)
        if nj + ell > N:
            break
        for lev in range(nj + 1, nj + ell + 1):
            labels[lev - 1] = f"rho:{len(blocks) + 1}"
        blocks.append({"j": len(blocks) + 1, "n": nj, "ell": ell,
                       "ell_le_eps_n": ell <= eps * nj})
        log_s += ell * lr
        pos = nj + ell
        nj = 16 * nj
    if not blocks:
        raise BudgetExceeded(f"no block fits in {N} levels (n_1 = {n_first})")
    ratios = np.where(np.array([lab == "tau" for lab in labels]), tau, rho)
    # tau levels between consecutive blocks must exceed (xi/2) l_j
    gaps_ok = []
    for a, b in zip(blocks, blocks[1:] + [None]):
        nxt = b["n"] if b is not None else N
        gaps_ok.append(nxt - (a["n"] + a["ell"]) > (xi / 2.0) * a["ell"])
    sigma = rho ** (1.0 / (1.0 + xi / 2.0)) * tau ** (xi / (2.0 + xi))
    last = blocks[-1]
    schedule = RatioSchedule(ratios)
    depth2 = depth_table(phi2, level_sums_from_ratios(schedule)).phi
    for b in blocks:
        b["depth_phi2"] = int(depth2[b["n"]])
    return ConstructionReport(
        kind="separation",
        schedule=schedule,
        segments=_segments_from_labels(labels),
        blocks=blocks,
        constants={"eps": eps, "tau": tau, "rho": rho, "xi": xi, "N_0": N0, "N_1": N1,
                   "n_1": n_first, "sigma": sigma},
        targets={"phi2_dim": LOG2 / abs(lr), "phi1_bound": LOG2 / abs(math.log(sigma))},
        audit={"sparsity_16": all(b["n"] >= 16 * a["n"] for a, b in zip(blocks, blocks[1:])),
               "tau_run_exceeds_half_xi_ell": gaps_ok,
               "ell_le_eps_n": all(b["ell_le_eps_n"] for b in blocks),
               "ell_equals_depth": all(b["ell"] == b["depth_phi2"] for b in blocks)},
        extra={"window": {"k0": max(1, n_first // 2), "K": last["n"] + last["ell"],
                          "n_max": N - last["n"] - last["ell"]}},
    )


# ---------------------------------------------------------------- failure of continuity

def contfailure_schedule(phi_fn: DimensionFunction, f_exponent=0.25, f_coef=1.0,
                         N=100_000, k_max=None) -> ConstructionReport:
    """Ratios 1/3 on n_j+1..n_j+f(n_j) and 1/27 elsewhere, f(n) = floor(coef * n^exp).

    The depth function of the construction is that of ``phi_fn``. Before n_k
    is fixed the depths are bounded from below by n Phi(s_n) / B, with A, B
    from the depth bracket for ratios in [1/27, 1/3] and C = A / (2B).
    """
    if not (0 < f_exponent < 1 and f_coef > 0):
        raise HypothesisViolated("f must be a sublinear power with positive coefficient")
    lt, lr = math.log(1 / 27), math.log(1 / 3)
    A = lr / lt
    B = lt / lr
    C = A / (2 * B)
    deep = float(phi_fn.of_log(N * lt))
    shallow = float(phi_fn.of_log(lt))
    if not deep < shallow:
        raise HypothesisViolated("Phi must decrease towards 0 so that phi(n)/n -> 0")

    def f(n):
        return max(1, int(math.floor(f_coef * n ** f_exponent)))

    labels = ["1/27"] * N
    log_s = np.zeros(N + 1)
    blocks = []
    prev = 0
    pos = 0

    def extend(to):
        # fill log_s up to level `to` with whatever labels are set
        nonlocal pos
        for lev in range(pos + 1, to + 1):
            log_s[lev] = log_s[lev - 1] + (lr if labels[lev - 1] == "1/3" else lt)
        pos = to

    k = 1
    while k_max is None or k <= k_max:
        Nk = _first_level(lambda n: n * phi_fn.of_log(n * lt) / (k * B) >= 2, 1, N)
        if Nk is None:
            break
        n = max(2 * Nk, 8 * prev, 1)
        found = None
        while n + f(n) <= N:
            fn = f(n)
            extend(n)
            m = n - fn
            lower_depth = m * float(phi_fn.of_log(log_s[m])) / B
            if fn <= n / 8 and fn <= (C / (2 * k)) * lower_depth:
                found = n
                break
            n += max(1, n // 64)
        if found is None:
            break
        fn = f(found)
        for lev in range(found + 1, found + fn + 1):
            labels[lev - 1] = "1/3"
        blocks.append({"k": k, "n": found, "f": fn, "N_k": Nk})
        prev = found
        k += 1
    if not blocks:
        raise HypothesisViolated(f"no block satisfies the growth constraints within {N} levels")
    extend(N)
    ratios = np.where(np.array([lab == "1/3" for lab in labels]), 1 / 3, 1 / 27)
    # geometric-mean audit: windows of m >= 2 f(n_j) levels starting near a block
    is_third = (ratios == 1 / 3).astype(np.int64)
    P = np.concatenate(([0], np.cumsum(is_third)))
    mean_ok = True
    for b in blocks:
        nj, fj = b["n"], b["f"]
        for start in range(max(0, nj - fj + 1), nj + fj + 1):
            m = np.arange(2 * fj, N - start + 1)
            if m.size == 0:
                continue
            thirds = P[start + m] - P[start]
            if np.any(thirds > m - thirds):
                mean_ok = False
                break
    return ConstructionReport(
        kind="continuity_failure",
        schedule=RatioSchedule(ratios),
        segments=_segments_from_labels(labels),
        blocks=blocks,
        constants={"A": A, "B": B, "C": C, "f_exponent": f_exponent, "f_coef": f_coef,
                   "phi": phi_fn.to_dict()},
        targets={"assouad": LOG2 / math.log(3), "scaled_phi_bound": LOG2 / math.log(9)},
        audit={"geometric_mean_at_most_one_ninth": mean_ok,
               "f_le_n_over_8": all(b["f"] <= b["n"] / 8 for b in blocks),
               "sparsity": all(b["n"] >= 8 * a["n"] for a, b in zip(blocks, blocks[1:]))},
    )


# ---------------------------------------------------------------- continuum of values

def rational_enumeration(count):
    """Zig-zag listing of the rationals in (0, 1) with period-doubling repetition.

    Round t lists the first 2^t distinct rationals p/q ordered by q then p, so
    every rational recurs infinitely often. Returns the first `count` terms.
    """
    distinct = []
    q = 2
    out = []
    t = 0
    while len(out) < count:
        need = 2 ** t
        while len(distinct) < need:
            for p in range(1, q):
                if math.gcd(p, q) == 1:
                    distinct.append(Fraction(p, q))
            q += 1
        out.extend(distinct[:need])
        t += 1
    return out[:count]


@dataclass(frozen=True)
class StepTarget:
    """Decreasing step function: values[i] on (breaks[i-1], breaks[i]]."""

    breaks: tuple
    values: tuple

    def __call__(self, p):
        for b, v in zip(self.breaks, self.values):
            if p <= b:
                return v
        return self.values[-1]

    def to_dict(self):
        return {"kind": "step", "breaks": list(self.breaks), "values": list(self.values)}


def continuum_schedule(d, alpha, beta, p_samples=None, N=100_000, pin_quasi_assouad=False,
                       family=DimensionFunction.power_log) -> ConstructionReport:
    """A Cantor schedule whose upper Phi_p estimate is d(p) at sampled rationals p.

    Ratios are a^2 except f(r_j) = 2^(-1/d(r_j)) on n_j+1..n_j+l_j, where
    a = 2^(-1/alpha). With pinning, ratio a also fills k_j+1..2k_j for
    k_j = 2 m_j, and the next n_j must clear 2 k_j the same way it clears m_j.
    """
    if not 0 < alpha < beta < 1:
        raise HypothesisViolated("need 0 < alpha < beta < 1")
    a = 2.0 ** (-1.0 / alpha)
    b = 2.0 ** (-1.0 / beta)
    la, lb = math.log(a), math.log(b)
    c = lb / (2 * la)
    A = 2.0 / c
    Bc = c

    def fval(p):
        dv = d(float(p))
        if not alpha - 1e-12 <= dv <= beta + 1e-12:
            raise HypothesisViolated(f"d({p}) = {dv} leaves [alpha, beta]")
        return 2.0 ** (-1.0 / dv)

    if p_samples is None:
        seq = rational_enumeration(64)
    else:
        base = [Fraction(p).limit_denominator(10_000) if not isinstance(p, Fraction) else p
                for p in p_samples]
        seq = (base * (1 + 64 // max(1, len(base))))[:max(64, len(base))]
    distinct = list(dict.fromkeys(seq))
    for p in distinct:
        fval(p)
    vals = [d(float(p)) for p in sorted(distinct)]
    if any(v2 > v1 + 1e-12 for v1, v2 in zip(vals, vals[1:])):
        raise HypothesisViolated("d must be non-increasing on the sampled rationals")

    IJ = {p: _continuum_thresholds(family(float(p)), c, A, la, lb) for p in distinct}
    blocks = _continuum_plan(seq, IJ, fval, family, la, A, Bc, N, pin_quasi_assouad)
    sampled = {Fraction(b_["r"]) for b_ in blocks}
    missing = [str(p) for p in distinct if p not in sampled]
    if p_samples is not None and missing:
        raise BudgetExceeded(
            f"{N} levels cannot hold a block for every sampled rational; missing {missing}; "
            f"blocks placed: {[(b_['r'], b_['n'], b_['m']) for b_ in blocks]}")
    if not blocks:
        raise BudgetExceeded(f"no block fits in {N} levels")
    labels = ["a^2"] * N
    ratio_of = {"a^2": a * a}
    for blk in blocks:
        for lev in range(blk["n"] + 1, blk["n"] + blk["ell"] + 1):
            labels[lev - 1] = f"f:{blk['j']}"
        ratio_of[f"f:{blk['j']}"] = blk["f"]
        if blk["k"] is not None:
            for lev in range(blk["k"] + 1, 2 * blk["k"] + 1):
                labels[lev - 1] = f"a:{blk['j']}"
            ratio_of[f"a:{blk['j']}"] = a
    ratios = np.array([ratio_of[lab] for lab in labels])
    targets = {str(p): LOG2 / abs(math.log(fval(p))) for p in distinct}
    targets["quasi_assouad"] = alpha if pin_quasi_assouad else LOG2 / abs(2 * la)
    return ConstructionReport(
        kind="continuum",
        schedule=RatioSchedule(ratios),
        segments=_segments_from_labels(labels),
        blocks=blocks,
        constants={"a": a, "b": b, "c": c, "A": A, "B": Bc,
                   "I_p": {str(p): IJ[p][0] for p in distinct},
                   "J_p": {str(p): IJ[p][1] for p in distinct}},
        targets=targets,
        audit={"ell_le_n_over_8": all(b_["ell_le_n_over_8"] for b_ in blocks)},
    )


_THRESHOLD_SCAN = 1 << 22


def _continuum_thresholds(phi, c, A, la, lb):
    """(I_p, J_p): from I_p on n c Phi_p(a^2n) >= 2, from J_p on Phi_p(b^n) <= 1/(8A)."""
    def i_pred(n):
        return c * n * phi.of_log(2 * n * la) >= 2

    def j_pred(n):
        return phi.of_log(n * lb) <= 1.0 / (8 * A)

    out = []
    for pred in (i_pred, j_pred):
        n = _first_level(pred, 1, _THRESHOLD_SCAN)
        if n is None:
            n = _bisect_level(pred, _THRESHOLD_SCAN)
        out.append(n)
    return tuple(out)


def _bisect_level(pred, lo):
    """First n > lo with pred(n), assuming pred is monotone past lo."""
    hi = lo * 2
    while not pred(np.array([hi]))[0]:
        lo, hi = hi, hi * 2
        if hi > 1 << 60:
            raise BudgetExceeded("threshold level does not exist")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(np.array([mid]))[0]:
            hi = mid
        else:
            lo = mid
    return hi


def _continuum_plan(seq, IJ, fval, family, la, A, Bc, N, pin):
    """Block positions for the rationals in `seq`, stopping at the first misfit.

    Works on scalars only, so N may be astronomically large.
    """
    blocks = []
    log_s_at = 0.0
    pos = 0
    reserve = 0  # last level claimed by a block's trailing run or pinning run
    for j, r in enumerate(seq, start=1):
        I, J = IJ[r]
        nj = 8 * max(I, J, reserve)
        phi_r = family(float(r))
        # condition (ii) against earlier larger rationals
        for prev in blocks:
            ri = Fraction(prev["r"])
            if ri > r:
                phi_i = family(float(ri))
                while nj <= N:
                    u = log_s_at + (nj - pos) * 2 * la
                    if phi_i.of_log(u) >= (8 * A / Bc) * phi_r.of_log(u):
                        break
                    nj = max(nj + 1, int(nj * 1.01))
        if nj > N:
            break
        u = log_s_at + (nj - pos) * 2 * la
        fr = fval(r)
        ell = _depth_len(phi_r, u, math.log(fr))
        mj = 4 * (nj + ell)
        kj = 2 * mj if pin else None
        end = 2 * kj if pin else mj
        if end > N:
            break
        blocks.append({"j": j, "r": str(r), "n": nj, "ell": ell, "m": mj, "k": kj,
                       "f": fr, "target": LOG2 / abs(math.log(fr)),
                       "ell_le_n_over_8": ell <= nj / 8})
        log_s_at = u + ell * math.log(fr)
        pos = nj + ell
        if pin:
            log_s_at += (kj - pos) * 2 * la + kj * la
            pos = 2 * kj
        reserve = end
    return blocks


def minimal_continuum_levels(d, alpha, beta, p_samples, pin_quasi_assouad=False,
                             family=DimensionFunction.power_log):
    """Fewest levels for which every sampled rational receives its first block."""
    a = 2.0 ** (-1.0 / alpha)
    b = 2.0 ** (-1.0 / beta)
    la, lb = math.log(a), math.log(b)
    c = lb / (2 * la)
    A = 2.0 / c
    base = [Fraction(p) for p in p_samples]
    IJ = {p: _continuum_thresholds(family(float(p)), c, A, la, lb) for p in base}

    def fval(p):
        return 2.0 ** (-1.0 / d(float(p)))

    blocks = _continuum_plan(base, IJ, fval, family, la, A, c, math.inf, pin_quasi_assouad)
    last = blocks[-1]
    return 2 * last["k"] * 2 if pin_quasi_assouad else last["m"]


# ---------------------------------------------------------------- block arrangement

def _inorder_levels(n):
    """Block levels of a complete binary tree of depth n, read left to right."""
    seq = np.array([n], dtype=np.int64)
    for lev in range(n - 1, 0, -1):
        nxt = np.empty(2 * seq.size + 1, dtype=np.int64)
        nxt[0:seq.size] = seq
        nxt[seq.size] = lev
        nxt[seq.size + 1:] = seq
        seq = nxt
    return seq


def block_set(log_alpha_fn, m, n, beta, v):
    """Sizing and point layout of one block set X_(m,n).

    Returns (points relative to 0, per-level rows) where each row records
    j, i(j), J_j and the block length.
    """
    la_m = log_alpha_fn(m)
    rows = []
    for j in range(1, n + 1):
        i = 1
        while log_alpha_fn(m + i) - la_m > j * math.log(beta) + 1e-12:
            i += 1
        ratio = math.exp(log_alpha_fn(m + i) - la_m)
        J = max(1, int(math.floor(beta ** j / ratio * (1 + 1e-12))))
        length = J * math.exp(log_alpha_fn(m + i))
        rows.append({"j": j, "i": i, "J": J, "block_length": length,
                     "gap": math.exp(log_alpha_fn(m + i))})
    levels = _inorder_levels(n)
    gap_of = np.array([rows[j - 1]["gap"] for j in range(1, n + 1)])
    J_of = np.array([rows[j - 1]["J"] for j in range(1, n + 1)])
    steps = np.repeat(gap_of[levels - 1], J_of[levels - 1])
    points = np.concatenate(([0.0], np.cumsum(steps)))
    return points, rows, levels


def thm5_block_arrangement(gaps: GapSequence, d, m_schedule, max_level=None,
                           residual_stage=10) -> ConstructionReport:
    """Gaps rearranged as E = B ∪ A with A = A_1 ∪ A_2 ∪ ..., A_k = X_(m_k, n_k).

    n_k is the largest depth for which the gap budget inequality holds and the
    gaps used stay above the resolution floor. The A_k sit side by side in
    decreasing order at the right of [0, 1] and the unused gaps form the
    Cantor part B on the left.
    """
    if gaps.kind != "blocks":
        raise HypothesisViolated("block arrangements need block-constant gaps; snap first")
    if not 0 < d < 1:
        raise HypothesisViolated("target must lie in (0, 1)")
    beta = 2.0 ** (-1.0 / d)
    M = gaps.log_alpha.size
    lam = np.diff(gaps.log_alpha)
    u = float(np.exp(lam.max())) if lam.size else 1 / 3
    v = float(np.exp(lam.min())) if lam.size else 1 / 3
    # the set cannot be thinner than the Cantor part: d must exceed log2/|log v|
    lower = LOG2 / abs(math.log(v))
    if d < lower - 1e-12 and d < LOG2 / abs(math.log(u)):
        raise HypothesisViolated(f"target {d} lies below the Cantor set value {lower:.4f}")
    c1 = 1.0 / (1.0 + 1.0 / v)
    c2 = math.log(beta) / math.log(v)
    c3 = math.log(beta) / math.log(u)
    if max_level is None:
        max_level = M - 1
        while max_level > 0 and math.exp(gaps.log_block(max_level)) <= MIN_INTERVAL:
            max_level -= 1

    def la(k):
        return gaps.log_block(k)

    sets = []
    used = {}
    prev_end = -1
    prev_diam = math.inf
    for k, m in enumerate(m_schedule, start=1):
        if m <= prev_end:
            raise HypothesisViolated(f"m_{k} = {m} reuses dyadic blocks of A_{k - 1}")
        # largest n with the budget inequality and the level cap
        n = 0
        while True:
            cand = n + 1
            _, rows, _ = block_set(la, m, cand, beta, v)
            i_max = rows[-1]["i"]
            budget = all(math.log2(1.0 / v) + kk / c2 <= m + kk - 1
                         for kk in range(1, i_max + 1))
            if not budget or m + i_max > max_level:
                break
            n = cand
        if n == 0:
            raise GapBudgetExceeded(f"m_{k} = {m} leaves no room for a single level")
        points, rows, levels = block_set(la, m, n, beta, v)
        diam = float(points[-1])
        if diam > prev_diam / 2 * (1 + 1e-12):
            raise HypothesisViolated(f"diameter of A_{k} exceeds half that of A_{k - 1}")
        for row in rows:
            blk = m + row["i"]
            used[blk] = used.get(blk, 0) + row["J"] * 2 ** (row["j"] - 1)
        sets.append({"k": k, "m": m, "n": n, "rows": rows, "points": points,
                     "levels": levels, "diameter": diam,
                     "alpha_m": math.exp(la(m))})
        prev_end = m + rows[-1]["i"]
        prev_diam = diam

    # audits
    viol = {"J_le_inv_v": 0, "block_length": 0, "diameter": 0, "budget": 0, "separation": 0}
    for s in sets:
        am = s["alpha_m"]
        for row in s["rows"]:
            if row["J"] > 1.0 / v * (1 + 1e-9):
                viol["J_le_inv_v"] += 1
            lo = c1 * am * beta ** row["j"]
            hi = am * beta ** row["j"]
            if not lo * (1 - 1e-9) <= row["block_length"] <= hi * (1 + 1e-9):
                viol["block_length"] += 1
        if s["diameter"] > am * beta / (1 - 2 * beta) * (1 + 1e-9):
            viol["diameter"] += 1
        sep = _level_separation(s)
        s["separation"] = sep
        r_half = 0.5 * s["rows"][-1]["block_length"]
        if s["n"] > 1 and not sep > r_half:
            viol["separation"] += 1
    budget_rows = []
    for blk in sorted(used):
        avail = 2 ** blk
        budget_rows.append({"block": blk, "used": used[blk], "available": avail})
        if used[blk] > avail / 2:
            viol["budget"] += 1
    if viol["budget"]:
        raise GapBudgetExceeded("a dyadic block is more than half consumed")

    # placement: A_1, A_2, ... left to right ending at the total mass
    total = gaps.total_mass
    width = sum(s["diameter"] for s in sets)
    start = total - width
    pts = []
    for s in sets:
        s["offset"] = start
        pts.append(start + s["points"])
        start += s["diameter"]
    a_points = np.unique(np.concatenate(pts))
    a_src = {"gaps": gap_fingerprint(gaps), "stage": "blocks", "arrangement": "block_tree"}
    # below the deepest block length the counts only see finitely many blocks
    finest = min(s["rows"][-1]["block_length"] for s in sets)
    A_set = FiniteApproximation(a_points, a_points.copy(), 0, a_src, 0.5 * finest)
    residual = _residual_cantor(gaps, used, total - width, residual_stage)
    E = residual.union(A_set)
    E = FiniteApproximation(E.lefts, E.rights, 0, a_src, max(residual.resolution, 0.0))
    labels = []
    for blk in range(0, max_level + 1):
        owner = next((f"A_{s['k']}" for s in sets
                      if s["m"] < blk <= s["m"] + s["rows"][-1]["i"]), "residual")
        labels.append(owner)
    arrangement = Arrangement("block_tree", gaps, prebuilt=E)
    rep = ConstructionReport(
        kind="block_arrangement",
        arrangement=arrangement,
        segments=_segments_from_labels(labels),
        blocks=[{k_: v_ for k_, v_ in s.items() if k_ not in ("points", "levels")}
                for s in sets],
        constants={"beta": beta, "u": u, "v": v, "c1": c1, "c2": c2, "c3": c3,
                   "c5": [s["n"] / s["m"] for s in sets], "max_level": max_level},
        targets={"quasi_assouad_A": d},
        audit={"violations": viol, "budget": budget_rows},
        extra={"segments_index": "dyadic gap block"},
    )
    rep.A_set = A_set
    rep.E_set = E
    rep.sets = sets
    rep.residual = residual
    return rep


def _level_separation(s):
    """Smallest distance between consecutive blocks of the deepest level."""
    rows, levels, points = s["rows"], s["levels"], s["points"]
    n = s["n"]
    J_of = np.array([r["J"] for r in rows])
    counts = J_of[levels - 1]
    starts = np.concatenate(([0], np.cumsum(counts)))[:-1]
    deep = np.flatnonzero(levels == n)
    if deep.size < 2:
        return math.inf
    left_ends = points[starts[deep] + counts[deep]]
    right_starts = points[starts[deep]]
    return float(np.min(right_starts[1:] - left_ends[:-1]))


def _residual_cantor(gaps, used, width, stage):
    """Unused gaps laid out in the canonical Cantor order on [0, width].

    Leaves of the final stage share the remaining mass equally.
    """
    counts = []
    lengths = []
    want = 2 ** stage - 1
    for blk in range(gaps.log_alpha.size):
        left = min(2 ** blk - used.get(blk, 0), want - sum(counts))
        counts.append(left)
        lengths.append(math.exp(gaps.log_alpha[blk]))
        if sum(counts) >= want:
            break
    seq = np.repeat(lengths, counts)
    take = min(want, seq.size)
    stage = int(math.floor(math.log2(take + 1)))
    take = 2 ** stage - 1
    placed = seq[:take]
    leaf_total = width - float(np.sum(placed))
    leaf = np.full(2 ** stage, leaf_total / 2 ** stage)
    rows = [placed[2 ** k - 1: 2 ** (k + 1) - 1] for k in range(stage)]
    lefts = _cantor_lefts(rows, leaf)
    return FiniteApproximation(lefts, lefts + leaf, stage, {}, float(leaf[0]))


def claim_ratios(report, triples, d=None):
    """N_r(B(z,R) ∩ A_k) / (min(|A_k|, R)/r)^d for triples (k, z, R, r)."""
    d = report.targets["quasi_assouad_A"] if d is None else d
    out = []
    for k, z, R, r in triples:
        s = report.sets[k - 1]
        pts = s["offset"] + s["points"]
        approx = FiniteApproximation(pts, pts.copy())
        n = covering_number(approx, z, R, r)
        out.append(n / (min(s["diameter"], R) / r) ** d)
    return np.array(out)


# ---------------------------------------------------------------- theta subsequence split

def theta_subsequence_split(gaps: GapSequence, d, theta, n_seq_start=2, sigma=None,
                            lo=None, hi=None):
    """Split gaps into b (with box dimension gamma*sigma) and the remainder.

    gamma*sigma = d(1 - theta). b_m = a_(n_k) when floor(m^(1/gamma)) <= n_k <
    floor((m+1)^(1/gamma)) for some n_k, else a_(floor(m^(1/gamma))), with
    n_(k+1) = 2^(n_k). Only the stored prefix is used.
    """
    if gaps.kind != "explicit":
        raise HypothesisViolated("the split works on an explicit decreasing sequence")
    L = gaps.n_known
    if sigma is None:
        sigma = box_dim_decreasing(gaps, lo=lo or max(2, L // 4), hi=hi or L)
    if not (0 < theta < 1 and 0 < d < min(sigma / (1 - theta), 1)):
        raise HypothesisViolated(
            f"need 0 < d < min(sigma/(1-theta), 1) = {min(sigma / (1 - theta), 1):.4f}")
    gamma = d * (1 - theta) / sigma
    nk = [n_seq_start]
    while nk[-1] < 64 and 2 ** nk[-1] <= L:
        nk.append(2 ** nk[-1])
    nk = [n for n in nk if n <= L]
    idx = []
    m = 1
    while True:
        lo_i = int(math.floor(m ** (1 / gamma)))
        hi_i = int(math.floor((m + 1) ** (1 / gamma)))
        if lo_i > L:
            break
        pick = lo_i
        for n in nk:
            if lo_i <= n < hi_i:
                pick = n
        idx.append(pick)
        m += 1
    idx = np.array(idx, dtype=np.int64)
    b = gaps.values[idx - 1]
    keep = np.ones(L, dtype=bool)
    keep[idx - 1] = False
    rest = gaps.values[keep]
    # comparability of the remainder with the original sequence
    comp = rest / gaps.values[: rest.size]
    report = ConstructionReport(
        kind="theta_split",
        constants={"sigma": sigma, "gamma": gamma, "theta": theta, "n_k": nk},
        targets={"box_dim_b": gamma * sigma, "theta_spectrum_b": gamma * sigma / (1 - theta)},
        audit={"remainder_ratio_min": float(comp.min()), "indices_used": int(idx.size)},
    )
    return (GapSequence.from_values(b), GapSequence.from_values(rest), report)
