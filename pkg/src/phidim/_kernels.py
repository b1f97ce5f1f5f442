"""Hot loops: depth search, the (k, n) extremal scan and greedy interval sweeps.

Two interchangeable backends exist. The numba one is used when numba imports
and ``PHIDIM_BACKEND`` is unset or ``numba``; ``PHIDIM_BACKEND=numpy`` forces
the pure numpy versions. Both return identical results.
"""
import math
import os

import numpy as np

LOG2 = math.log(2.0)
TIE_REL = 1e-12
# absolute slack for endpoint comparisons; far below the 1e-13 interval floor
POS_EPS = 1e-15

_requested = os.environ.get("PHIDIM_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"PHIDIM_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

try:
    if _requested == "numpy":
        raise ImportError
    # the TBB layer shipped with some wheels is too old and only warns
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    import numba
    from numba import njit, prange
    BACKEND = "numba"
except ImportError:
    numba = None
    BACKEND = "numpy"


# ---------------------------------------------------------------- numpy side

def _depth_scan_np(log_s, thresholds):
    # log_s is strictly decreasing, so -log_s is sorted ascending
    neg = -log_s
    target = -thresholds - TIE_REL * np.maximum(1.0, np.abs(thresholds))
    idx = np.searchsorted(neg, target, side="left")
    out = idx - np.arange(thresholds.size)
    out[idx >= log_s.size] = -1
    return out.astype(np.int64)


def _beta_rows_np(log_s, phi, k0, K, n_max, upper):
    N = log_s.size - 1
    rows = K - k0 + 1
    best = np.full(rows, np.nan)
    best_n = np.full(rows, -1, dtype=np.int64)
    for i in range(rows):
        k = k0 + i
        if phi[k] < 0:
            continue
        lo = max(int(phi[k]), 1)
        hi = min(n_max, N - k)
        if lo > hi:
            continue
        n = np.arange(lo, hi + 1)
        beta = n * LOG2 / (log_s[k] - log_s[k + n])
        j = int(np.argmax(beta)) if upper else int(np.argmin(beta))
        best[i] = beta[j]
        best_n[i] = lo + j
    return best, best_n


def _window(lefts, rights, lo, hi):
    i0 = int(np.searchsorted(rights, lo - POS_EPS, side="left"))
    i1 = int(np.searchsorted(lefts, hi + POS_EPS, side="right"))
    return i0, i1


def _cover_count_py(lefts, rights, lo, hi, r):
    i0, i1 = _window(lefts, rights, lo, hi)
    width = 2.0 * r
    count = 0
    end = -np.inf
    i = i0
    while i < i1:
        a = max(lefts[i], lo)
        b = min(rights[i], hi)
        if b <= end + POS_EPS:
            i += 1
            continue
        start = a if a > end + POS_EPS else end
        k = math.ceil((b - start) / width - 1e-12)
        if k < 1:
            k = 1
        count += k
        end = start + k * width
        # jump past every interval fully covered by the chain so far
        j = int(np.searchsorted(rights, end + POS_EPS, side="right"))
        i = j if j > i else i + 1
    return count


def _pack_count_py(lefts, rights, lo, hi, r):
    i0, i1 = _window(lefts, rights, lo, hi)
    width = 2.0 * r
    count = 0
    last = -np.inf
    i = i0
    while i < i1:
        a = max(lefts[i], lo)
        b = min(rights[i], hi)
        c = last + width
        if a > c + POS_EPS:
            pick = a
        elif b > c + POS_EPS:
            pick = c
        else:
            i += 1
            continue
        count += 1
        last = pick
        if pick + width >= b:
            i += 1
    return count


def _cover_counts_np(lefts, rights, centers, R, r):
    return np.array([_cover_count_py(lefts, rights, z - R, z + R, r) for z in centers],
                    dtype=np.int64)


# ---------------------------------------------------------------- numba side

if numba is not None:

    @njit(cache=True)
    def _first_at_most(log_s, start, t):
        # smallest i >= start with log_s[i] <= t, or log_s.size
        lo = np.int64(start)
        hi = np.int64(log_s.size)
        while lo < hi:
            mid = (lo + hi) // 2
            if log_s[mid] <= t:
                hi = mid
            else:
                lo = mid + 1
        return lo

    @njit(cache=True, parallel=True)
    def _depth_scan_nb(log_s, thresholds):
        m = thresholds.size
        out = np.empty(m, dtype=np.int64)
        for n in prange(m):
            t = thresholds[n] + TIE_REL * max(1.0, abs(thresholds[n]))
            i = _first_at_most(log_s, n, t)
            out[n] = i - n if i < log_s.size else -1
        return out

    @njit(cache=True, parallel=True)
    def _beta_rows_nb(log_s, phi, k0, K, n_max, upper):
        N = log_s.size - 1
        rows = K - k0 + 1
        best = np.full(rows, np.nan)
        best_n = np.full(rows, -1, dtype=np.int64)
        for i in prange(rows):
            k = np.int64(k0) + np.int64(i)
            if phi[k] < 0:
                continue
            lo = max(phi[k], np.int64(1))
            hi = min(n_max, N - k)
            if lo > hi:
                continue
            base = log_s[k]
            bv = lo * LOG2 / (base - log_s[k + lo])
            bn = lo
            for n in range(lo + 1, hi + 1):
                v = n * LOG2 / (base - log_s[k + n])
                if (upper and v > bv) or ((not upper) and v < bv):
                    bv = v
                    bn = n
            best[i] = bv
            best_n[i] = bn
        return best, best_n

    @njit(cache=True)
    def _upper_bound(arr, x):
        lo = 0
        hi = arr.size
        while lo < hi:
            mid = (lo + hi) // 2
            if arr[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        return lo

    @njit(cache=True)
    def _lower_bound(arr, x):
        lo = 0
        hi = arr.size
        while lo < hi:
            mid = (lo + hi) // 2
            if arr[mid] < x:
                lo = mid + 1
            else:
                hi = mid
        return lo

    @njit(cache=True)
    def _cover_count_nb(lefts, rights, lo, hi, r):
        i0 = _lower_bound(rights, lo - POS_EPS)
        i1 = _upper_bound(lefts, hi + POS_EPS)
        width = 2.0 * r
        count = 0
        end = -np.inf
        i = i0
        while i < i1:
            a = max(lefts[i], lo)
            b = min(rights[i], hi)
            if b <= end + POS_EPS:
                i += 1
                continue
            start = a if a > end + POS_EPS else end
            k = math.ceil((b - start) / width - 1e-12)
            if k < 1:
                k = 1
            count += k
            end = start + k * width
            j = _upper_bound(rights, end + POS_EPS)
            i = j if j > i else i + 1
        return count

    @njit(cache=True)
    def _pack_count_nb(lefts, rights, lo, hi, r):
        i0 = _lower_bound(rights, lo - POS_EPS)
        i1 = _upper_bound(lefts, hi + POS_EPS)
        width = 2.0 * r
        count = 0
        last = -np.inf
        i = i0
        while i < i1:
            a = max(lefts[i], lo)
            b = min(rights[i], hi)
            c = last + width
            if a > c + POS_EPS:
                pick = a
            elif b > c + POS_EPS:
                pick = c
            else:
                i += 1
                continue
            count += 1
            last = pick
            if pick + width >= b:
                i += 1
        return count

    @njit(cache=True, parallel=True)
    def _cover_counts_nb(lefts, rights, centers, R, r):
        out = np.empty(centers.size, dtype=np.int64)
        for i in prange(centers.size):
            z = centers[i]
            out[i] = _cover_count_nb(lefts, rights, z - R, z + R, r)
        return out


# ---------------------------------------------------------------- dispatch

def depth_scan(log_s, thresholds, backend=None):
    """Minimal offset j with log_s[n+j] <= thresholds[n]; -1 when none exists."""
    log_s = np.ascontiguousarray(log_s, dtype=np.float64)
    thresholds = np.ascontiguousarray(thresholds, dtype=np.float64)
    if (backend or BACKEND) == "numba":
        return _depth_scan_nb(log_s, thresholds)
    return _depth_scan_np(log_s, thresholds)


def beta_rows(log_s, phi, k0, K, n_max, upper, backend=None):
    """Per-row extremum of n log 2 / (log_s[k] - log_s[k+n]) and its argument."""
    log_s = np.ascontiguousarray(log_s, dtype=np.float64)
    phi = np.ascontiguousarray(phi, dtype=np.int64)
    if (backend or BACKEND) == "numba":
        return _beta_rows_nb(log_s, phi, int(k0), int(K), int(n_max), bool(upper))
    return _beta_rows_np(log_s, phi, int(k0), int(K), int(n_max), bool(upper))


def cover_count(lefts, rights, lo, hi, r, backend=None):
    if (backend or BACKEND) == "numba":
        return int(_cover_count_nb(lefts, rights, float(lo), float(hi), float(r)))
    return _cover_count_py(lefts, rights, lo, hi, r)


def pack_count(lefts, rights, lo, hi, r, backend=None):
    if (backend or BACKEND) == "numba":
        return int(_pack_count_nb(lefts, rights, float(lo), float(hi), float(r)))
    return _pack_count_py(lefts, rights, lo, hi, r)


def cover_counts(lefts, rights, centers, R, r, backend=None):
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    if (backend or BACKEND) == "numba":
        return _cover_counts_nb(lefts, rights, centers, float(R), float(r))
    return _cover_counts_np(lefts, rights, centers, R, r)


def set_threads(n):
    if numba is not None and n:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
