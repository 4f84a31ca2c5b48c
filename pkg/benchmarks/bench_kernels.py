"""Numba kernels vs their pure-numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py [--n 1000] [--reps 5]``. Both
flavours are called directly, so the ``REGIONMG_DISABLE_NUMBA`` switch does
not need to be set; the numba flavour is warmed up before timing.
"""
import argparse
import statistics
import time

import numpy as np

from regionmg import kernels
from regionmg._accel import HAVE_NUMBA
from regionmg.problems import gen_poisson
from regionmg.transfers import nearest_coarse, select_coarse_points, structured_interp


def median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(n):
    A = gen_poisson(2, (n, n), "9pt")
    axes = [select_coarse_points(n, 3)] * 2
    P = structured_interp((n, n), axes, "linear")
    x = np.random.default_rng(0).standard_normal(A.n_rows)
    d = A.diagonal()
    agg = nearest_coarse(n, axes[0])
    nc = axes[0].size

    def gs(flavour):
        r, u = x.copy(), np.zeros_like(x)
        flavour(A.row_ptr, A.col_idx, A.values, d, r, u, 1.0, False)

    return {
        "spmv": (lambda f: f(A.row_ptr, A.col_idx, A.values, x), "spmv"),
        "spgemm A*P": (lambda f: f(A.row_ptr, A.col_idx, A.values, P.row_ptr, P.col_idx,
                                   P.values, P.n_cols), "spgemm"),
        "gauss-seidel sweep": (gs, "gs_sweep"),
        "rap 9pt constant": (lambda f: f(A.values, n, n, agg, agg, nc, nc), "rap_const_2d"),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000, help="grid points per axis")
    ap.add_argument("--reps", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; the numba column runs as plain python")
    print(f"{'kernel':<22s}{'numba [s]':>12s}{'numpy [s]':>12s}{'speedup':>10s}")
    for name, (call, base) in cases(args.n).items():
        nb = getattr(kernels, base + "_nb")
        npf = getattr(kernels, base + "_np")
        call(nb)
        t_nb = median_time(lambda: call(nb), args.reps)
        t_np = median_time(lambda: call(npf), args.reps)
        print(f"{name:<22s}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
