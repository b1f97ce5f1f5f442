"""Closed-form dimension estimates for central Cantor sets from their level sums.

For a scan window the upper estimate is

    max over k in [k0, K], n in [max(phi(k), 1), n_max] of n log 2 / (log s_k - log s_{k+n})

and the lower estimate is the matching minimum. ``partials[i]`` is the
extremum restricted to k >= k0 + i, which shows how the value settles as the
burn-in grows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import LOG2, DepthTable, DimensionFunction, GapSequence, LevelStats, depth_table
from .errors import EmptyScan


@dataclass(frozen=True)
class ScanWindow:
    k0: int
    K: int
    n_max: int

    def __post_init__(self):
        if self.k0 < 1:
            raise ValueError("k0 must be at least 1")
        if self.K < self.k0:
            raise ValueError("K must be >= k0")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")

    @classmethod
    def default(cls, N):
        """k0 = N/4, K = N/2, n_max = N/2."""
        if N < 4:
            raise ValueError("default window needs N >= 4")
        return cls(max(1, N // 4), N // 2, N - N // 2)

    def check(self, N):
        if self.K + self.n_max > N:
            raise ValueError(f"window reaches level {self.K + self.n_max} beyond N = {N}")


@dataclass
class DimEstimate:
    value: float
    mode: str
    achieving_pair: tuple | None = None
    partials: np.ndarray = field(default_factory=lambda: np.empty(0))
    k0: int = 0
    label: str = ""

    def __float__(self):
        return float(self.value)


def _scan(stats, depth, w, upper, backend=None):
    if depth.stats is not stats and depth.phi.size != stats.N:
        raise ValueError("depth table does not match the level stats")
    w.check(stats.N)
    best, best_n = _kernels.beta_rows(stats.log_s, depth.phi, w.k0, w.K, w.n_max, upper,
                                      backend=backend)
    ok = ~np.isnan(best)
    if not ok.any():
        raise EmptyScan(f"no admissible (k, n) pair in k = {w.k0}..{w.K}")
    fill = -np.inf if upper else np.inf
    vals = np.where(ok, best, fill)
    acc = np.maximum.accumulate if upper else np.minimum.accumulate
    partials = acc(vals[::-1])[::-1]
    i = int(np.argmax(vals) if upper else np.argmin(vals))
    return DimEstimate(
        value=float(vals[i]),
        mode="upper" if upper else "lower",
        achieving_pair=(w.k0 + i, int(best_n[i])),
        partials=partials,
        k0=w.k0,
        label=depth.phi_fn.label(),
    )


def upper_phi_dim(stats: LevelStats, depth: DepthTable, w: ScanWindow | None = None,
                  backend=None) -> DimEstimate:
    w = w or ScanWindow.default(stats.N)
    return _scan(stats, depth, w, True, backend)


def lower_phi_dim(stats: LevelStats, depth: DepthTable, w: ScanWindow | None = None,
                  backend=None) -> DimEstimate:
    w = w or ScanWindow.default(stats.N)
    return _scan(stats, depth, w, False, backend)


def phi_dim(stats, phi_fn, w=None, mode="upper", backend=None):
    """Convenience wrapper building the depth table on the fly."""
    depth = depth_table(phi_fn, stats, backend=backend)
    fn = upper_phi_dim if mode == "upper" else lower_phi_dim
    return fn(stats, depth, w, backend=backend)


def assouad(stats, w=None, mode="upper"):
    return phi_dim(stats, DimensionFunction.constant(0.0), w, mode)


def theta_spectrum(stats, theta, w=None, mode="upper"):
    return phi_dim(stats, DimensionFunction.theta(theta), w, mode)


def quasi_assouad(stats, theta_grid, w=None, mode="upper"):
    """theta-spectrum along an ascending grid; value is the last grid point."""
    grid = np.asarray(theta_grid, dtype=np.float64)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] <= 0 or grid[-1] >= 1:
        raise ValueError("theta grid must be strictly increasing inside (0, 1)")
    seq = [theta_spectrum(stats, t, w, mode) for t in grid]
    last = seq[-1]
    return DimEstimate(
        value=last.value,
        mode=mode,
        achieving_pair=last.achieving_pair,
        partials=np.array([e.value for e in seq]),
        k0=last.k0,
        label=f"quasi_assouad[{grid.size}]",
    )


def box_dims_cantor(stats: LevelStats, w: ScanWindow | None = None):
    """(min, max) of n log 2 / |log s_n| for n in [k0, K], plus the raw sequence."""
    w = w or ScanWindow.default(stats.N)
    if w.K > stats.N:
        raise ValueError("window exceeds available levels")
    n = np.arange(w.k0, w.K + 1)
    seq = n * LOG2 / np.abs(stats.log_s[n])
    return float(seq.min()), float(seq.max()), seq


def box_dim_decreasing(gaps: GapSequence, w: ScanWindow | None = None, lo=None, hi=None):
    """max of log n / (-log a_n) over an index range.

    With a ScanWindow the range is [k0, K]; ``lo``/``hi`` override it.
    """
    lo = lo if lo is not None else (w.k0 if w else 2)
    hi = hi if hi is not None else (w.K if w else gaps.n_known)
    n = np.arange(max(lo, 2), hi + 1)
    a = gaps.terms(n)
    keep = (a > 0) & (a < 1)
    if not keep.any():
        return 0.0
    return float(np.max(np.log(n[keep]) / -np.log(a[keep])))


def beta_surface(stats: LevelStats, depth: DepthTable, w: ScanWindow):
    """Rows (k, n, phi_k, beta, admissible) over the full window rectangle."""
    w.check(stats.N)
    ls = stats.log_s
    for k in range(w.k0, w.K + 1):
        pk = int(depth.phi[k])
        n = np.arange(1, w.n_max + 1)
        beta = n * LOG2 / (ls[k] - ls[k + n])
        adm = (pk >= 0) & (n >= max(pk, 1))
        for nn, b, a in zip(n.tolist(), beta.tolist(), adm.tolist()):
            yield k, nn, pk, b, int(a)


def closed_form(ratio):
    """log 2 / |log ratio| for a constant dissection ratio."""
    return LOG2 / abs(math.log(ratio))
