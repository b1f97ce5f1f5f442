"""Time the numba and numpy kernels on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--levels 20000]

Both backends are called explicitly, so PHIDIM_BACKEND does not matter here
beyond making numba importable. Results are checked for equality first.
"""
import argparse
import statistics
import time

import numpy as np

from phidim import _kernels
from phidim.constructors import cantor_approximation, middle_third_gaps
from phidim.core import DimensionFunction, RatioSchedule, level_sums_from_ratios
from phidim.oracle import sample_centers


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def cases(levels, stage):
    rng = np.random.default_rng(0)
    stats = level_sums_from_ratios(RatioSchedule(rng.uniform(0.1, 0.45, levels)))
    thr = DimensionFunction.power_log(0.5).threshold(stats.log_s[:-1])
    phi = _kernels.depth_scan(stats.log_s, thr, backend="numpy")
    k0, K, n_max = levels // 4, levels // 2, levels - levels // 2
    F = cantor_approximation(middle_third_gaps(40), stage)
    centres = sample_centers(F, max_centers=2000)
    R, r = 0.05, 1e-4
    return {
        "depth_scan": lambda b: _kernels.depth_scan(stats.log_s, thr, backend=b),
        "beta_rows": lambda b: _kernels.beta_rows(stats.log_s, phi, k0, K, n_max, True, b),
        "cover_count": lambda b: _kernels.cover_count(F.lefts, F.rights, 0.0, 1.0, r, b),
        "pack_count": lambda b: _kernels.pack_count(F.lefts, F.rights, 0.0, 1.0, r, b),
        "cover_counts": lambda b: _kernels.cover_counts(F.lefts, F.rights, centres, R, r, b),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b), equal_nan=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--levels", type=int, default=20_000)
    ap.add_argument("--stage", type=int, default=16)
    args = ap.parse_args()
    if _kernels.BACKEND != "numba":
        raise SystemExit("numba is not available; nothing to compare")
    print(f"{'kernel':<14}{'numpy (s)':>12}{'numba (s)':>12}{'speed-up':>10}")
    for name, run in cases(args.levels, args.stage).items():
        if not same(run("numpy"), run("numba")):  # also warms up the jit
            raise SystemExit(f"{name}: backends disagree")
        t_np, _ = best_of(lambda: run("numpy"), args.repeat)
        t_nb, _ = best_of(lambda: run("numba"), args.repeat)
        print(f"{name:<14}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
