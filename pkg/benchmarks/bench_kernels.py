"""Numba vs numpy timings for the backprojection kernels.

Run: python benchmarks/bench_kernels.py [--size 128] [--views 180] [--repeat 5]

Each kernel is called once to warm up (numba compiles on first call), then
timed ``--repeat`` times; the best time is reported together with the max
abs difference between the two backends.
"""

import argparse
import time

import numpy as np

from linfbp import _kernels
from linfbp._accel import NUMBA_AVAILABLE
from linfbp.geometry import GridSpec, fitted_geometry


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(grid, geometry, rng):
    n, m = geometry.n_bins, geometry.n_views
    q = rng.standard_normal((n, m))
    z = rng.standard_normal((5, n, m))
    img = rng.standard_normal(grid.shape)
    return {
        "backproject nearest": lambda b: _kernels.backproject_sum(q, geometry, grid, "nearest", b),
        "backproject linear": lambda b: _kernels.backproject_sum(q, geometry, grid, "linear", b),
        "backproject cubic": lambda b: _kernels.backproject_sum(q, geometry, grid, "cubic", b),
        "splat (forward)": lambda b: _kernels.splat(img, geometry, grid, 1.0, b),
        "lcr hat fast": lambda b: _kernels.lcr_backproject(
            z, geometry, grid, "linear", 2, False, True, b),
        "lcr hat full": lambda b: _kernels.lcr_backproject(
            z, geometry, grid, "linear", 2, False, False, b),
        "lcr fourier k=2": lambda b: _kernels.lcr_backproject(
            z, geometry, grid, "fourier", 2, False, False, b),
        "lcr scatter (adjoint)": lambda b: _kernels.lcr_scatter(
            img, geometry, grid, "linear", 2, 5, False, b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--views", type=int, default=180)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    grid = GridSpec(args.size, args.size, 2.0 / args.size)
    geometry = fitted_geometry(grid, args.views)
    rng = np.random.Generator(np.random.PCG64(0))
    print(f"grid {args.size}x{args.size}, {geometry.n_bins} bins, {geometry.n_views} views")
    if not NUMBA_AVAILABLE:
        print("numba not importable; timing the numpy path only")
    print(f"{'kernel':<24}{'numpy s':>10}{'numba s':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, fn in cases(grid, geometry, rng).items():
        t_np = best_time(lambda: fn("numpy"), args.repeat)
        if not NUMBA_AVAILABLE:
            print(f"{name:<24}{t_np:10.4f}")
            continue
        t_nb = best_time(lambda: fn("numba"), args.repeat)
        diff = float(np.max(np.abs(fn("numpy") - fn("numba"))))
        print(f"{name:<24}{t_np:10.4f}{t_nb:10.4f}{t_np / t_nb:9.2f}{diff:12.2e}")


if __name__ == "__main__":
    main()
