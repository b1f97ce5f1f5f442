"""Brute-force covering and packing counts on finite unions of closed intervals.

Balls are closed intervals [z - R, z + R]. In one dimension a left-to-right
greedy sweep gives the exact covering number and the exact packing number, so
no search is needed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import DimensionFunction
from .errors import IncompatibleSources, ResolutionWarning

AMBIENT_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class FiniteApproximation:
    """Sorted closed intervals [lefts[i], rights[i]]; points have lefts == rights.

    ``resolution`` is the finest radius scale the approximation stands for:
    radii below twice this value say more about the truncation than the set.
    ``source`` identifies the gap sequence and stage it came from.
    """

    lefts: np.ndarray
    rights: np.ndarray
    level: int = 0
    source: dict = field(default_factory=dict)
    resolution: float = 0.0

    def __post_init__(self):
        lo = np.ascontiguousarray(self.lefts, dtype=np.float64)
        hi = np.ascontiguousarray(self.rights, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lefts and rights must be matching 1-d arrays")
        if np.any(hi < lo):
            raise ValueError("an interval has right < left")
        if lo.size > 1 and np.any(lo[1:] < hi[:-1]):
            raise ValueError("intervals must be sorted with disjoint interiors")
        if lo.size and (lo[0] < -AMBIENT_SLACK):
            raise ValueError("intervals must lie in [0, 1 + eps]")
        object.__setattr__(self, "lefts", lo)
        object.__setattr__(self, "rights", hi)

    @classmethod
    def from_points(cls, points, **kw):
        p = np.unique(np.asarray(points, dtype=np.float64))
        return cls(p, p.copy(), **kw)

    @classmethod
    def from_intervals(cls, intervals, merge=False, **kw):
        iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
        iv = iv[np.argsort(iv[:, 0], kind="stable")]
        if merge:
            iv = _merge(iv)
        return cls(iv[:, 0], iv[:, 1], **kw)

    @property
    def size(self):
        return self.lefts.size

    @property
    def lo(self):
        return float(self.lefts[0])

    @property
    def hi(self):
        return float(self.rights[-1])

    @property
    def diameter(self):
        return self.hi - self.lo if self.size else 0.0

    @property
    def measure(self):
        return float(np.sum(self.rights - self.lefts))

    def endpoints(self):
        return np.unique(np.concatenate((self.lefts, self.rights)))

    def union(self, other):
        iv = np.concatenate((np.column_stack((self.lefts, self.rights)),
                             np.column_stack((other.lefts, other.rights))))
        return FiniteApproximation.from_intervals(
            iv, merge=True, resolution=max(self.resolution, other.resolution))

    def shifted(self, dx):
        return FiniteApproximation(self.lefts + dx, self.rights + dx, self.level,
                                   dict(self.source), self.resolution)

    def nearest_point(self, x):
        """Closest point of the set to each x."""
        x = np.asarray(x, dtype=np.float64)
        i = np.clip(np.searchsorted(self.lefts, x, side="right") - 1, 0, self.size - 1)
        inside = np.clip(x, self.lefts[i], self.rights[i])
        j = np.minimum(i + 1, self.size - 1)
        nxt = self.lefts[j]
        return np.where(np.abs(nxt - x) < np.abs(inside - x), nxt, inside)


def _merge(iv):
    out = [list(iv[0])]
    for a, b in iv[1:]:
        if a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return np.asarray(out)


def covering_number(approx: FiniteApproximation, z, R, r, backend=None) -> int:
    """Least number of closed r-balls covering approx ∩ [z - R, z + R]."""
    if r <= 0:
        raise ValueError("r must be positive")
    if approx.size == 0:
        return 0
    return _kernels.cover_count(approx.lefts, approx.rights, z - R, z + R, r, backend)


def packing_number(approx: FiniteApproximation, z, R, r, backend=None) -> int:
    """Most points of approx ∩ [z - R, z + R] that are pairwise more than 2r apart."""
    if r <= 0:
        raise ValueError("r must be positive")
    if approx.size == 0:
        return 0
    return _kernels.pack_count(approx.lefts, approx.rights, z - R, z + R, r, backend)


def global_covering_number(approx: FiniteApproximation, r, backend=None) -> int:
    if approx.size == 0:
        return 0
    mid = 0.5 * (approx.lo + approx.hi)
    return covering_number(approx, mid, 0.5 * approx.diameter + r, r, backend)


# ---------------------------------------------------------------- empirical dims

@dataclass
class EmpiricalEstimate:
    value: float
    slope: float
    intercept: float
    mode: str
    rows: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    kind: str = "pairs"

    def scatter_rows(self):
        if self.kind != "pairs":
            raise ValueError("scatter rows exist only for pairwise estimates")
        for R, r, s in self.rows:
            yield R, r, math.log(R / r), s, self.mode


def sample_centers(approx, rule="endpoints", max_centers=None, extras=0, seed=0):
    """Centres z in the set: interval endpoints, optionally thinned, plus uniform extras.

    Thinning keeps evenly spaced endpoints so the result is deterministic.
    Extras are uniform draws on the hull moved to the nearest point of the set.
    """
    if isinstance(rule, (list, tuple, np.ndarray)):
        z = np.asarray(rule, dtype=np.float64)
    elif rule == "endpoints":
        z = approx.endpoints()
    elif rule == "left":
        z = np.array([approx.lo])
    else:
        raise ValueError(f"unknown centre rule {rule!r}")
    if max_centers is not None and z.size > max_centers:
        idx = np.unique(np.linspace(0, z.size - 1, max_centers).round().astype(np.int64))
        z = z[idx]
    if extras:
        rng = np.random.default_rng(seed)
        u = rng.uniform(approx.lo, approx.hi, size=int(extras))
        z = np.unique(np.concatenate((z, approx.nearest_point(u))))
    return z


def scale_pairs(phi_fn: DimensionFunction, R_grid, floor, r_steps=1, r_factor=0.5):
    """(R, r) pairs with r = R^(1+Phi(R)) * r_factor^i, keeping r >= 2 * floor.

    Returns the kept pairs and the radii R dropped because even the largest
    admissible r was below the floor.
    """
    pairs, dropped = [], []
    for R in R_grid:
        R = float(R)
        r0 = min(R, math.exp(float(phi_fn.threshold(math.log(R)))))
        if not r0 >= 2 * floor:
            dropped.append(R)
            continue
        r = r0
        for _ in range(int(r_steps)):
            if r < 2 * floor:
                break
            pairs.append((R, r))
            r *= r_factor
    return pairs, dropped


def empirical_phi_dim(approx: FiniteApproximation, phi_fn: DimensionFunction, R_grid,
                      z_samples="endpoints", mode="upper", r_steps=1, r_factor=0.5,
                      max_centers=None, extras=0, seed=0, backend=None):
    """Estimate a Phi-dimension from covering counts on a finite approximation.

    For each R the statistic is S = max_z N_r(B(z, R)) (min_z in lower mode).
    ``value`` is the extremum of log S / log(R/r) over pairs with R > r and
    ``slope`` a least-squares fit of log S against log(R/r).
    """
    if mode not in ("upper", "lower"):
        raise ValueError("mode must be 'upper' or 'lower'")
    pairs, dropped = scale_pairs(phi_fn, R_grid, approx.resolution, r_steps, r_factor)
    for R in dropped:
        warnings.warn(f"R = {R:.6g} dropped: radius below twice the resolution "
                      f"{approx.resolution:.3g}", ResolutionWarning, stacklevel=2)
    centers = sample_centers(approx, z_samples, max_centers, extras, seed)
    rows = []
    for R, r in pairs:
        counts = _kernels.cover_counts(approx.lefts, approx.rights, centers, R, r, backend)
        s = int(counts.max() if mode == "upper" else counts.min())
        rows.append((R, r, s))
    x = np.array([math.log(R / r) for R, r, _ in rows])
    y = np.log(np.array([max(s, 1) for _, _, s in rows], dtype=np.float64))
    useful = x > 1e-9
    if useful.any():
        ratios = y[useful] / x[useful]
        value = float(ratios.max() if mode == "upper" else ratios.min())
    else:
        value = math.nan
    if np.unique(np.round(x, 12)).size >= 2:
        slope, intercept = np.polyfit(x, y, 1)
    else:
        slope, intercept = math.nan, math.nan
    return EmpiricalEstimate(value, float(slope), float(intercept), mode, rows, dropped)


def empirical_slope_profile(approx: FiniteApproximation, phi_fn: DimensionFunction, R_grid,
                            r_steps, r_factor, z_samples="endpoints", mode="upper",
                            min_points=4, max_centers=None, extras=0, seed=0, backend=None):
    """Fit log S against log(R/r) separately for each R along an r ladder.

    Per-radius fits cancel the R-dependent constant that a pooled fit mixes in.
    ``value`` is the largest per-R slope (smallest in lower mode); ``rows``
    holds (R, slope, points used).
    """
    centers = sample_centers(approx, z_samples, max_centers, extras, seed)
    rows, dropped = [], []
    for R in R_grid:
        pairs, lost = scale_pairs(phi_fn, [R], approx.resolution, r_steps, r_factor)
        if len(pairs) < min_points:
            dropped.append(float(R))
            continue
        x, y = [], []
        for RR, r in pairs:
            counts = _kernels.cover_counts(approx.lefts, approx.rights, centers, RR, r, backend)
            s = counts.max() if mode == "upper" else counts.min()
            x.append(math.log(RR / r))
            y.append(math.log(max(int(s), 1)))
        slope = float(np.polyfit(x, y, 1)[0])
        rows.append((float(R), slope, len(pairs)))
    if not rows:
        return EmpiricalEstimate(math.nan, math.nan, math.nan, mode, rows, dropped, "profile")
    slopes = np.array([r[1] for r in rows])
    value = float(slopes.max() if mode == "upper" else slopes.min())
    return EmpiricalEstimate(value, float(np.median(slopes)), math.nan, mode, rows, dropped,
                             "profile")


# ---------------------------------------------------------------- inequality checks

@dataclass(frozen=True)
class Violation:
    z: float
    R: float
    r: float
    lhs: float
    rhs: float


def _same_source(a, b, need_stage=True):
    ga, gb = a.source.get("gaps"), b.source.get("gaps")
    if ga is None or gb is None or ga != gb:
        raise IncompatibleSources("approximations come from different gap sequences")
    if need_stage and a.source.get("stage") != b.source.get("stage"):
        raise IncompatibleSources(
            f"stages differ: {a.source.get('stage')} vs {b.source.get('stage')}")


def check_prop_dec(E: FiniteApproximation, D: FiniteApproximation, triples, constant=64.0,
                   backend=None):
    """Triples (z, R, r) where N_r(E ∩ B(z,R)) > constant * N_r(D ∩ B(0,R))."""
    _same_source(E, D)
    out = []
    for z, R, r in triples:
        lhs = covering_number(E, z, R, r, backend)
        rhs = constant * covering_number(D, 0.0, R, r, backend)
        if lhs > rhs:
            out.append(Violation(float(z), float(R), float(r), float(lhs), float(rhs)))
    return out


def check_lemma_box(F: FiniteApproximation, G: FiniteApproximation, r_grid, bound=16.0,
                    backend=None):
    """Radii where N_r(F) / N_r(G) leaves [1/bound, bound]; z and R are NaN."""
    _same_source(F, G)
    out = []
    for r in r_grid:
        nf = global_covering_number(F, r, backend)
        ng = global_covering_number(G, r, backend)
        if not (ng / bound <= nf <= bound * ng):
            out.append(Violation(math.nan, math.nan, float(r), float(nf), float(ng)))
    return out


def lemma_box_ratios(F, G, r_grid, backend=None):
    return [global_covering_number(F, r, backend) / global_covering_number(G, r, backend)
            for r in r_grid]
