"""Domain types: dimension functions, gap sequences, level sums and depth tables.

Every level sum is kept as a natural log. Constructions with 10^5 levels have
s_n far below the smallest representable double, so s_n itself is never formed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from . import _kernels
from .errors import InsufficientTail, RatioOutOfRange

LOG2 = math.log(2.0)
UNRESOLVED = -1

_KINDS = ("constant", "reciprocal_log", "power_log", "loglog", "table", "piecewise")


@dataclass(frozen=True, eq=False)
class DimensionFunction:
    """A non-negative function on (0, 1) evaluated through log x.

    Build instances with the classmethods. ``scale`` multiplies the whole
    function, which is how families like t*Phi are expressed. Tabulated kinds
    store their sample abscissae as logs, sorted from largest x to smallest.
    """

    kind: str
    param: float = 0.0
    scale: float = 1.0
    log_x: np.ndarray | None = None
    values: np.ndarray | None = None
    rule: str = "step"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown dimension function kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("scale must be non-negative")
        if self.kind in ("table", "piecewise"):
            lx = np.asarray(self.log_x, dtype=np.float64)
            vals = np.asarray(self.values, dtype=np.float64)
            if lx.ndim != 1 or lx.shape != vals.shape or lx.size == 0:
                raise ValueError("table needs matching 1-d x and phi arrays")
            if np.any(np.diff(lx) >= 0):
                raise ValueError("table abscissae must be strictly decreasing")
            if self.rule not in ("step", "linear"):
                raise ValueError("rule must be 'step' or 'linear'")
            object.__setattr__(self, "log_x", lx)
            object.__setattr__(self, "values", vals)

    # -- factories
    @classmethod
    def constant(cls, delta):
        if delta < 0:
            raise ValueError("constant must be >= 0")
        return cls("constant", float(delta))

    @classmethod
    def theta(cls, theta):
        """The constant function 1/theta - 1 used by the theta spectrum."""
        if not 0 < theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        return cls.constant(1.0 / theta - 1.0)

    @classmethod
    def reciprocal_log(cls, c):
        if c <= 0:
            raise ValueError("c must be positive")
        return cls("reciprocal_log", float(c))

    @classmethod
    def power_log(cls, p):
        if not 0 < p < 1:
            raise ValueError("p must lie in (0, 1)")
        return cls("power_log", float(p))

    @classmethod
    def loglog(cls):
        return cls("loglog")

    @classmethod
    def table(cls, x, phi, rule="linear"):
        x = np.asarray(x, dtype=np.float64)
        order = np.argsort(-x)
        return cls("table", log_x=np.log(x[order]), values=np.asarray(phi, float)[order],
                   rule=rule)

    @classmethod
    def piecewise_on_levels(cls, log_x, phi):
        """Value phi[i] on (x[i+1], x[i]]; ``log_x`` must be strictly decreasing."""
        return cls("piecewise", log_x=np.asarray(log_x, float), values=np.asarray(phi, float),
                   rule="step")

    def scaled(self, t):
        return DimensionFunction(self.kind, self.param, self.scale * float(t), self.log_x,
                                 self.values, self.rule)

    # -- evaluation
    @property
    def log_floor(self):
        if self.log_x is None:
            return -math.inf
        return float(self.log_x[-1])

    @property
    def domain_floor(self):
        """Smallest x with a defined value; 0.0 means the family has no floor."""
        return math.exp(self.log_floor)

    def of_log(self, u):
        """Evaluate at x = exp(u). Values below the domain floor are NaN."""
        u = np.asarray(u, dtype=np.float64)
        a = np.abs(u)
        with np.errstate(divide="ignore", invalid="ignore"):
            if self.kind == "constant":
                out = np.full(u.shape, self.param)
            elif self.kind == "reciprocal_log":
                out = self.param / a
            elif self.kind == "power_log":
                out = a ** (self.param - 1.0)
            elif self.kind == "loglog":
                out = np.where(a > 1.0, np.log(a) / a, 0.0)
            else:
                out = self._lookup(u)
        return self.scale * out

    def _lookup(self, u):
        lx, vals = self.log_x, self.values
        # position in the ascending array -lx
        pos = np.searchsorted(-lx, -u, side="right")
        if self.rule == "step":
            # x in (x[i+1], x[i]] maps to vals[i]; x above x[0] clamps to vals[0]
            idx = np.clip(pos - 1, 0, lx.size - 1)
            out = vals[idx].astype(np.float64)
        else:
            out = np.interp(-u, -lx, vals)
        return np.where(u < lx[-1], np.nan, out)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return self.of_log(np.log(x))

    def threshold(self, log_s):
        """(1 + Phi(s)) log s, with the product taken as 0 at s = 1."""
        log_s = np.asarray(log_s, dtype=np.float64)
        phi = self.of_log(log_s)
        with np.errstate(invalid="ignore"):
            prod = np.where(log_s == 0.0, 0.0, phi * log_s)
        return log_s + prod

    # -- serialisation
    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["delta"] = self.param
        elif self.kind == "reciprocal_log":
            d["c"] = self.param
        elif self.kind == "power_log":
            d["p"] = self.param
        elif self.kind in ("table", "piecewise"):
            d["log_x"] = self.log_x.tolist()
            d["phi"] = self.values.tolist()
            d["rule"] = self.rule
        if self.scale != 1.0:
            d["scale"] = self.scale
        return d

    @classmethod
    def from_dict(cls, d):
        kind = d["kind"]
        scale = float(d.get("scale", 1.0))
        if kind == "constant":
            f = cls.constant(d.get("delta", 0.0))
        elif kind == "theta":
            f = cls.theta(d["theta"])
        elif kind == "reciprocal_log":
            f = cls.reciprocal_log(d.get("c", 1.0))
        elif kind == "power_log":
            f = cls.power_log(d["p"])
        elif kind == "loglog":
            f = cls.loglog()
        elif kind in ("table", "piecewise"):
            if "log_x" in d:
                lx = np.asarray(d["log_x"], float)
            else:
                lx = np.log(np.asarray(d["x"], float))
            f = cls(kind, log_x=lx, values=np.asarray(d["phi"], float),
                    rule=d.get("rule", "step" if kind == "piecewise" else "linear"))
        else:
            raise ValueError(f"unknown dimension function kind {kind!r}")
        return f.scaled(scale) if scale != 1.0 else f

    def label(self):
        base = {
            "constant": f"constant({self.param:g})",
            "reciprocal_log": f"reciprocal_log({self.param:g})",
            "power_log": f"power_log({self.param:g})",
            "loglog": "loglog",
            "table": f"table[{0 if self.values is None else self.values.size}]",
            "piecewise": f"piecewise[{0 if self.values is None else self.values.size}]",
        }[self.kind]
        return base if self.scale == 1.0 else f"{self.scale:g}*{base}"


# ---------------------------------------------------------------- gap sequences

@dataclass(frozen=True, eq=False)
class GapSequence:
    """Decreasing summable gap lengths a_1 >= a_2 >= ...

    Two representations:

    * ``blocks``: log_alpha[n] is the common log length of a_{2^n}, ..., a_{2^{n+1}-1}.
      An optional geometric tail continues alpha_n by a ratio below 1/2.
    * ``explicit``: the first terms are listed; the tail is "zero", "geometric"
      (continuing the last term by a fixed ratio) or "power" (c * j**-p).
    """

    kind: str
    log_alpha: np.ndarray | None = None
    values: np.ndarray | None = None
    tail: tuple = ("zero",)

    def __post_init__(self):
        if self.kind == "blocks":
            la = np.asarray(self.log_alpha, dtype=np.float64)
            if la.ndim != 1 or la.size == 0:
                raise ValueError("blocks need at least one block value")
            if np.any(np.diff(la) > 1e-12):
                raise ValueError("block values must be non-increasing")
            object.__setattr__(self, "log_alpha", la)
            if self.tail[0] == "geometric" and not 0 < self.tail[1] < 0.5:
                raise ValueError("block tail ratio must lie in (0, 1/2)")
            if self.tail[0] not in ("zero", "geometric"):
                raise ValueError("block sequences take a zero or geometric tail")
        elif self.kind == "explicit":
            v = np.asarray(self.values, dtype=np.float64)
            if v.ndim != 1 or v.size == 0 or np.any(v < 0):
                raise ValueError("explicit gaps must be a non-empty non-negative array")
            if np.any(np.diff(v) > 1e-15 * v[0]):
                raise ValueError("gaps must be non-increasing")
            object.__setattr__(self, "values", v)
            t = self.tail[0]
            if t == "geometric" and not 0 < self.tail[1] < 1:
                raise ValueError("geometric tail ratio must lie in (0, 1)")
            if t == "power" and not self.tail[2] > 1:
                raise ValueError("power tail exponent must exceed 1")
            if t not in ("zero", "geometric", "power"):
                raise ValueError(f"unknown tail kind {t!r}")
        else:
            raise ValueError(f"unknown gap sequence kind {self.kind!r}")

    @classmethod
    def from_blocks(cls, alphas=None, *, log_alphas=None, tail_ratio=None):
        if log_alphas is None:
            log_alphas = np.log(np.asarray(alphas, dtype=np.float64))
        tail = ("zero",) if tail_ratio is None else ("geometric", float(tail_ratio))
        return cls("blocks", log_alpha=log_alphas, tail=tail)

    @classmethod
    def from_values(cls, values, tail=("zero",)):
        return cls("explicit", values=values, tail=tuple(tail))

    @property
    def is_block_constant(self):
        return self.kind == "blocks"

    @property
    def n_known(self):
        """Number of explicitly stored terms."""
        if self.kind == "blocks":
            return 2 ** self.log_alpha.size - 1
        return self.values.size

    @property
    def infinite(self):
        return self.tail[0] != "zero"

    def log_block(self, n):
        """log alpha_n for block n (possibly past the stored blocks)."""
        M = self.log_alpha.size
        if n < M:
            return float(self.log_alpha[n])
        if self.tail[0] == "zero":
            return -math.inf
        return float(self.log_alpha[-1] + (n - M + 1) * math.log(self.tail[1]))

    def terms(self, j):
        """a_j for 1-based indices j (array-like)."""
        j = np.asarray(j, dtype=np.int64)
        if np.any(j < 1):
            raise ValueError("gap indices start at 1")
        if self.kind == "blocks":
            blk = np.floor(np.log2(j.astype(np.float64))).astype(np.int64)
            # guard against rounding in log2 near powers of two
            blk = np.where(2 ** (blk + 1) <= j, blk + 1, blk)
            blk = np.where(2 ** blk > j, blk - 1, blk)
            uniq, inv = np.unique(blk.ravel(), return_inverse=True)
            logs = np.array([self.log_block(int(b)) for b in uniq])
            return np.exp(logs[inv]).reshape(j.shape)
        L = self.values.size
        out = np.zeros(j.shape, dtype=np.float64)
        inside = j <= L
        out[inside] = self.values[j[inside] - 1]
        beyond = j[~inside]
        if beyond.size:
            t = self.tail
            if t[0] == "geometric":
                out[~inside] = self.values[-1] * t[1] ** (beyond - L)
            elif t[0] == "power":
                out[~inside] = t[1] * beyond.astype(np.float64) ** (-t[2])
        return out

    def prefix(self, count):
        return self.terms(np.arange(1, count + 1))

    def log_tail_sum(self, j):
        """log of sum_{i >= j} a_i (1-based)."""
        if self.kind == "blocks":
            raise NotImplementedError("use level sums for block sequences")
        L = self.values.size
        t = self.tail
        if j <= L:
            known = float(np.sum(self.values[j - 1:]))
            rest = math.exp(self.log_tail_sum(L + 1)) if t[0] != "zero" else 0.0
            return math.log(known + rest) if known + rest > 0 else -math.inf
        if t[0] == "zero":
            return -math.inf
        if t[0] == "geometric":
            q = t[1]
            return math.log(self.values[-1]) + (j - L) * math.log(q) - math.log1p(-q)
        return math.log(t[1]) + math.log(zeta(t[2], j))

    @property
    def total_mass(self):
        if self.kind == "blocks":
            return math.exp(self._block_log_suffix()[0])
        return math.exp(self.log_tail_sum(1))

    def normalized(self):
        log_m = math.log(self.total_mass)
        if self.kind == "blocks":
            return GapSequence("blocks", log_alpha=self.log_alpha - log_m, tail=self.tail)
        t = self.tail
        if t[0] == "power":
            t = ("power", t[1] / math.exp(log_m), t[2])
        return GapSequence("explicit", values=self.values / math.exp(log_m), tail=t)

    def snapped(self, n_blocks):
        """Block-constant sequence with alpha_n = a_{2^n}, n < n_blocks."""
        if self.kind == "blocks":
            return self
        a = self.terms(2 ** np.arange(n_blocks))
        if np.any(a <= 0):
            raise InsufficientTail("sequence vanishes before the requested blocks")
        return GapSequence.from_blocks(a)

    def observed_kappa(self):
        """max a_n / a_{2n} over indices where both terms are stored."""
        if self.kind == "blocks":
            la = self.log_alpha
            if la.size < 2:
                return 1.0
            return float(np.exp(np.max(la[:-1] - la[1:])))
        half = self.values.size // 2
        if half < 1:
            return 1.0
        n = np.arange(1, half + 1)
        num = self.values[n - 1]
        den = self.values[2 * n - 1]
        ok = den > 0
        return float(np.max(num[ok] / den[ok])) if ok.any() else math.inf

    def _block_log_suffix(self, upto=None):
        # T[k] = log sum_{k' >= k} 2^{k'} alpha_{k'} for k = 0..M
        la = self.log_alpha
        M = la.size
        terms = np.arange(M) * LOG2 + la
        if self.tail[0] == "geometric":
            q = self.tail[1]
            tail = (M - 1) * LOG2 + la[-1] + math.log(2 * q) - math.log1p(-2 * q)
        else:
            tail = -math.inf
        T = np.empty(M + 1)
        T[M] = tail
        for k in range(M - 1, -1, -1):
            T[k] = np.logaddexp(terms[k], T[k + 1])
        return T

    def to_dict(self):
        if self.kind == "blocks":
            d = {"kind": "blocks", "log_alpha": self.log_alpha.tolist()}
        else:
            d = {"kind": "explicit", "values": self.values.tolist()}
        d["tail"] = list(self.tail)
        return d


# ---------------------------------------------------------------- level sums

@dataclass(frozen=True, eq=False)
class LevelStats:
    """log s_n for n = 0..N together with a note on where it came from."""

    log_s: np.ndarray
    origin: str = "unspecified"

    def __post_init__(self):
        ls = np.asarray(self.log_s, dtype=np.float64)
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls)):
            raise ValueError("log_s must be a non-empty finite 1-d array")
        d = np.diff(ls)
        tol = 1e-12 * np.maximum(1.0, np.abs(ls[1:]))
        if np.any(d > -LOG2 + tol):
            bad = int(np.argmax(d > -LOG2 + tol))
            raise ValueError(f"s_(n+1) <= s_n / 2 fails at n = {bad}")
        object.__setattr__(self, "log_s", ls)

    @property
    def N(self):
        return self.log_s.size - 1

    def log_ratios(self):
        return np.diff(self.log_s)

    def to_rows(self, depth=None):
        phi = depth.phi if depth is not None else None
        for n in range(self.log_s.size):
            p = "" if phi is None or n >= phi.size else int(phi[n])
            yield n, float(self.log_s[n]), p


@dataclass(frozen=True, eq=False)
class RatioSchedule:
    """Dissection ratios r_1..r_N of a central Cantor set, each in (0, 1/2)."""

    ratios: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.ratios, dtype=np.float64).ravel()
        bad = ~((r > 0) & (r < 0.5))
        if np.any(bad):
            i = int(np.argmax(bad))
            raise RatioOutOfRange(f"ratio r_{i + 1} = {r[i]!r} is not in (0, 1/2)")
        object.__setattr__(self, "ratios", r)

    @property
    def N(self):
        return self.ratios.size

    def to_dict(self):
        return {"kind": "ratios", "ratios": self.ratios.tolist()}


def level_sums(gaps: GapSequence, N: int) -> LevelStats:
    """log s_n = log(2^-n sum_{j >= 2^n} a_j) for n = 0..N."""
    if N < 0:
        raise ValueError("N must be non-negative")
    n = np.arange(N + 1)
    if gaps.kind == "blocks":
        M = gaps.log_alpha.size
        T = gaps._block_log_suffix()
        out = np.empty(N + 1)
        inside = n < M
        out[inside] = T[n[inside]] - n[inside] * LOG2
        if np.any(~inside):
            if gaps.tail[0] == "zero":
                raise InsufficientTail(
                    f"only {M} gap blocks are known and the tail is zero; s_{N} vanishes")
            q = gaps.tail[1]
            far = n[~inside]
            out[~inside] = gaps.log_alpha[-1] + (far - M + 1) * math.log(q) - math.log1p(-2 * q)
        return LevelStats(out, origin="gaps:blocks")
    L = gaps.values.size
    if gaps.tail[0] == "zero" and 2 ** N > L:
        raise InsufficientTail(
            f"s_{N} needs terms from index {2 ** N} on but only {L} are known")
    # suffix sums of the stored part, computed from the small end for accuracy
    suffix = np.cumsum(gaps.values[::-1])[::-1]
    rest = math.exp(gaps.log_tail_sum(L + 1)) if gaps.tail[0] != "zero" else 0.0
    out = np.empty(N + 1)
    for k in range(N + 1):
        start = 2 ** k
        if start <= L:
            total = suffix[start - 1] + rest
            out[k] = math.log(total) - k * LOG2
        else:
            out[k] = gaps.log_tail_sum(start) - k * LOG2
    if not np.all(np.isfinite(out)):
        raise InsufficientTail("a level sum vanished")
    return LevelStats(out, origin=f"gaps:explicit:{gaps.tail[0]}")


def level_sums_from_ratios(schedule: RatioSchedule) -> LevelStats:
    """log s_n as the running sum of log r_k, starting from log s_0 = 0."""
    log_s = np.concatenate(([0.0], np.cumsum(np.log(schedule.ratios))))
    return LevelStats(log_s, origin="ratios")


@dataclass(frozen=True, eq=False)
class DepthTable:
    """phi[n] for n = 0..N-1; UNRESOLVED (-1) where no offset within range works."""

    phi: np.ndarray
    phi_fn: DimensionFunction = field(repr=False)
    stats: LevelStats = field(repr=False)

    @property
    def resolved(self):
        return self.phi >= 0

    @property
    def n_unresolved(self):
        return int(np.sum(self.phi < 0))


def depth_table(phi_fn: DimensionFunction, stats: LevelStats, backend=None) -> DepthTable:
    """Minimal j >= 0 with log s_{n+j} <= (1 + Phi(s_n)) log s_n, for every n < N."""
    ls = stats.log_s
    thr = phi_fn.threshold(ls[:-1])
    ok = np.isfinite(thr)
    phi = np.full(thr.size, UNRESOLVED, dtype=np.int64)
    if ok.any():
        # unresolvable thresholds are pushed below every level
        t = np.where(ok, thr, -np.inf)
        phi = _kernels.depth_scan(ls, t, backend=backend)
        phi[~ok] = UNRESOLVED
    return DepthTable(phi, phi_fn, stats)


def level_comparable_bounds(stats: LevelStats):
    """(min, max) of the consecutive ratios s_{n+1}/s_n."""
    r = np.exp(stats.log_ratios())
    if r.size == 0:
        raise ValueError("need at least one level ratio")
    return float(r.min()), float(r.max())


@dataclass
class DimensionFunctionReport:
    negative: list = field(default_factory=list)
    non_monotone: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.negative and not self.non_monotone


def validate_dimension_function(phi_fn: DimensionFunction, grid, log_grid=False):
    """Check Phi >= 0 and that x^(1+Phi(x)) does not increase as x decreases.

    ``grid`` must be sorted descending (as x values). With ``log_grid`` the
    entries are log x, which allows grids far below the double range.
    """
    g = np.asarray(grid, dtype=np.float64)
    u = g if log_grid else np.log(g)
    if np.any(np.diff(u) > 0):
        raise ValueError("grid must be sorted descending")
    vals = phi_fn.of_log(u)
    report = DimensionFunctionReport()
    for i in np.flatnonzero(vals < 0):
        report.negative.append((float(g[i]), float(vals[i])))
    w = phi_fn.threshold(u)  # log of x^(1+Phi(x))
    tol = 1e-12 * np.maximum(1.0, np.abs(w[:-1]))
    for i in np.flatnonzero(w[1:] > w[:-1] + tol):
        report.non_monotone.append((int(i), float(g[i]), float(g[i + 1])))
    return report
