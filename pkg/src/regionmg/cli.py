"""Command-line driver: ``regionmg {solve,equivalence,bench,hybrid}``.

Every subcommand accepts ``--config FILE`` with ``key = value`` lines using
the long flag names (``max-iters = 50``); flags on the command line win.
Exit codes: 0 success, 1 divergence / failed check, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import os
import statistics
import sys
import time

import numpy as np

from .composite import composite_setup, composite_solve
from .layout import LayoutError
from .multigrid import (CoarseningError, CycleConfig, DivergenceError, SMOOTHERS,
                        setup_hierarchy, solve)
from .problems import (STENCILS, cube_scenarios, flag_regions, gen_poisson, parse_counts,
                       region_grid_layout)
from .sparse import SingularMatrixError, triple_product
from .transfers import (CONSTANT, fast_rap_2d_const, max_abs_diff, select_coarse_points,
                        structured_interp)

BENCH_SIZES = ((140, 36), (140, 180), (700, 180), (700, 900))
EQUIV_THRESHOLD = {"jacobi": 1e-10, "gauss_seidel": 5e-2, "symmetric_gs": 5e-2, "chebyshev": 5e-2}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument handling


def _add_problem_args(p, dim=2, n="82", regions="3x3", levels=3):
    p.add_argument("--dim", type=int, default=dim, choices=(2, 3))
    p.add_argument("--n", default=n, help="points per axis: N or NxM[xK]")
    p.add_argument("--regions", default=regions, help="regions per axis, e.g. 3x3 or 3x3x3")
    p.add_argument("--levels", type=int, default=levels)
    p.add_argument("--rate", type=int, default=3)
    p.add_argument("--stencil", choices=STENCILS, default=None)
    p.add_argument("--bc", choices=("dirichlet", "neumann"), default="dirichlet")
    p.add_argument("--transfer", choices=("linear", "constant"), default="linear")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".")


def _add_cycle_args(p, smoother="jacobi", tol=1e-12, cycle="v", max_iters=100, sweeps=1,
                    rhs="random"):
    p.add_argument("--smoother", choices=SMOOTHERS, default=smoother)
    p.add_argument("--omega", type=float, default=None,
                   help="damping; default 0.67 for jacobi, 1.0 for Gauss-Seidel")
    p.add_argument("--degree", type=int, default=1, help="Chebyshev degree K")
    p.add_argument("--sweeps", type=int, default=sweeps,
                   help="Jacobi / Gauss-Seidel sweeps per smoothing step")
    p.add_argument("--eig-ratio", type=float, default=20.0)
    p.add_argument("--boost", type=float, default=1.1)
    p.add_argument("--cycle", choices=("v", "w"), default=cycle)
    p.add_argument("--tol", type=float, default=tol)
    p.add_argument("--max-iters", type=int, default=max_iters)
    p.add_argument("--rhs", choices=("random", "zero"), default=rhs,
                   help="random: seeded b, zero initial guess; "
                        "zero: b = 0 with a seeded random initial guess")


def build_parser():
    ap = argparse.ArgumentParser(prog="regionmg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="region multigrid solve, writes history.csv")
    _add_problem_args(p)
    _add_cycle_args(p)
    p.add_argument("--unstructured", default="", help="comma-separated region ids")
    p.add_argument("--config")

    p = sub.add_parser("equivalence", help="region vs composite multigrid histories")
    _add_problem_args(p)
    _add_cycle_args(p, rhs="zero")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--config")

    p = sub.add_parser("bench", help="generic vs structured 9-point triple product")
    p.add_argument("--sizes", default=",".join(f"{a}x{b}" for a, b in BENCH_SIZES),
                   help="coarse sizes, e.g. 140x36,700x180")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--rate", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=".")
    p.add_argument("--config")

    p = sub.add_parser("hybrid", help="iteration counts with unstructured regions")
    _add_problem_args(p, dim=3, n="28", regions="3x3x3", levels=3)
    _add_cycle_args(p, smoother="symmetric_gs", tol=1e-6, cycle="w", max_iters=100, sweeps=2)
    p.add_argument("--scenarios", default="all",
                   help="comma-separated scenario names, or 'all'")
    p.add_argument("--config")
    p.set_defaults(transfer=CONSTANT)
    return ap


def _read_config(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (t.strip() for t in line.split("=", 1))
            out += [f"--{key.lstrip('-')}", value]
    return out


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "config", None):
        file_args = _read_config(args.config)
        # file values first, command-line flags override them
        args = ap.parse_args([argv[0]] + file_args + argv[1:])
    return args


def _dims(args):
    parts = [int(t) for t in str(args.n).lower().split("x")]
    if len(parts) == 1:
        parts = parts * args.dim
    if len(parts) != args.dim:
        raise ConfigError(f"--n {args.n} does not match --dim {args.dim}")
    return tuple(parts)


def _cycle_config(args):
    omega = args.omega
    if omega is None:
        omega = 0.67 if args.smoother == "jacobi" else 1.0
    try:
        return CycleConfig(cycle=args.cycle, smoother=args.smoother, omega=omega,
                           sweeps=args.sweeps, degree=args.degree, eig_ratio=args.eig_ratio,
                           boost=args.boost, tol=args.tol, max_iters=args.max_iters)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _problem(args):
    dims = _dims(args)
    counts = parse_counts(args.regions)
    if len(counts) != args.dim:
        raise ConfigError(f"--regions {args.regions} does not match --dim {args.dim}")
    if args.levels < 2:
        raise ConfigError("--levels must be at least 2")
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    uneven = any((n - 1) % c for n, c in zip(dims, counts))
    A = gen_poisson(args.dim, dims, args.stencil, args.bc)
    layout = region_grid_layout(dims, counts, uneven=uneven)
    rng = np.random.default_rng(args.seed)
    n = A.n_rows
    if args.rhs == "random":
        b, u0 = rng.standard_normal(n), None
    else:
        b, u0 = np.zeros(n), rng.standard_normal(n)
    return dims, A, layout, b, u0


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        fh.write("iter,rel_residual\n")
        for k, v in enumerate(history):
            fh.write(f"{k},{v:.8e}\n")


def _out(args, name):
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# ---------------------------------------------------------------------------
# subcommands


def run_solve(args):
    dims, A, layout, b, u0 = _problem(args)
    config = _cycle_config(args)
    if args.unstructured:
        layout = flag_regions(layout, [int(t) for t in args.unstructured.split(",")])
    t0 = time.perf_counter()
    h = setup_hierarchy(A, layout, args.levels, args.rate, args.transfer, args.workers)
    t1 = time.perf_counter()
    try:
        _, history = solve(h, b, config, u0=u0)
    except DivergenceError as exc:
        write_history(_out(args, "history.csv"), exc.history)
        print(f"diverged: {exc}", file=sys.stderr)
        return 1
    t2 = time.perf_counter()
    write_history(_out(args, "history.csv"), history)
    converged = history[-1] < config.tol or len(history) == 1
    print(f"iterations {len(history) - 1}")
    print(f"final relative residual {history[-1]:.8e}")
    print(f"setup time {t1 - t0:.4f} s")
    print(f"solve time {t2 - t1:.4f} s")
    if not converged:
        print(f"not converged within {config.max_iters} iterations", file=sys.stderr)
        return 1
    return 0


def _coarse_coords_match(h, dims, rate):
    """True when every region level picks the same grid points as global coarsening."""
    axes = [np.arange(n) for n in dims]
    for level in h.levels[1:]:
        axes = [a[select_coarse_points(a.size, rate)] for a in axes]
        coords = level.layout.coords
        grid = np.stack([g.ravel() for g in np.meshgrid(*axes[::-1], indexing="ij")[::-1]], axis=1)
        if coords is None or coords.shape != grid.shape:
            return False
        key = lambda c: np.lexsort(c.T[::-1])  # noqa: E731
        if not np.array_equal(coords[key(coords)], grid[key(grid)]):
            return False
    return True


def run_equivalence(args):
    dims, A, layout, b, u0 = _problem(args)
    config = _cycle_config(args)
    h = setup_hierarchy(A, layout, args.levels, args.rate, args.transfer, args.workers)
    ch = composite_setup(A, dims, args.levels, args.rate, args.transfer)
    try:
        _, hr = solve(h, b, config, u0=u0)
        _, hc = composite_solve(ch, b, config, u0=u0)
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 1
    write_history(_out(args, "region_history.csv"), hr)
    write_history(_out(args, "composite_history.csv"), hc)
    k = min(len(hr), len(hc))
    diff = [abs(hr[i] - hc[i]) / hc[i] if hc[i] else abs(hr[i]) for i in range(k)]
    with open(_out(args, "diff.csv"), "w") as fh:
        fh.write("iter,region,composite,rel_diff\n")
        for i in range(k):
            fh.write(f"{i},{hr[i]:.8e},{hc[i]:.8e},{diff[i]:.3e}\n")
    threshold = args.threshold if args.threshold is not None else EQUIV_THRESHOLD[config.smoother]
    window = diff if config.smoother == "jacobi" else diff[:9]
    worst = max(window) if window else 0.0
    print(f"region iterations {len(hr) - 1}, composite iterations {len(hc) - 1}")
    print(f"max relative difference {worst:.3e} (threshold {threshold:.1e})")
    if not _coarse_coords_match(h, dims, args.rate):
        print("coarse grids differ between region and composite hierarchies; report only")
        return 0
    ok = worst <= threshold
    if config.smoother == "jacobi":
        ok = ok and len(hr) == len(hc)
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def _median_time(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def run_bench(args):
    try:
        sizes = [tuple(int(t) for t in s.lower().split("x")) for s in args.sizes.split(",")]
    except ValueError:
        raise ConfigError(f"bad --sizes {args.sizes!r}") from None
    rows = []
    ok = True
    for cx, cy in sizes:
        nx, ny = args.rate * (cx - 1) + 1, args.rate * (cy - 1) + 1
        A = gen_poisson(2, (nx, ny), "9pt")
        axes = (select_coarse_points(nx, args.rate), select_coarse_points(ny, args.rate))
        P = structured_interp((nx, ny), axes, CONSTANT)
        R = P.T
        generic = triple_product(R, A, P)
        fast = fast_rap_2d_const(A, nx, ny, args.rate)
        err = max_abs_diff(generic, fast) / max(1.0, float(np.abs(generic.values).max()))
        if err > 1e-13:
            ok = False
        t_gen = _median_time(lambda: triple_product(R, A, P), args.reps)
        t_fast = _median_time(lambda: fast_rap_2d_const(A, nx, ny, args.rate), args.reps)
        rows.append((cx, cy, nx, ny, t_gen, t_fast, t_gen / t_fast, err))
        print(f"{cx}x{cy} coarse ({nx}x{ny} fine): generic {t_gen:.4f} s, "
              f"structured {t_fast:.4f} s, ratio {t_gen / t_fast:.1f}, max diff {err:.1e}")
        del A, P, R, generic, fast
    with open(_out(args, "bench.csv"), "w") as fh:
        fh.write("coarse_nx,coarse_ny,fine_nx,fine_ny,generic_s,structured_s,ratio,max_rel_diff\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]},{r[4]:.6f},{r[5]:.6f},{r[6]:.2f},{r[7]:.3e}\n")
    if not ok:
        print("kernels disagree", file=sys.stderr)
    return 0 if ok else 1


def run_hybrid(args):
    dims, A, layout, b, u0 = _problem(args)
    config = _cycle_config(args)
    scenarios = cube_scenarios(parse_counts(args.regions))
    names = list(scenarios) if args.scenarios == "all" else args.scenarios.split(",")
    unknown = [s for s in names if s not in scenarios]
    if unknown:
        raise ConfigError(f"unknown scenario(s) {unknown}; known: {sorted(scenarios)}")
    results = []
    failed = False
    for name in names:
        flagged = flag_regions(layout, scenarios[name])
        h = setup_hierarchy(A, flagged, args.levels, args.rate, CONSTANT, args.workers)
        try:
            _, history = solve(h, b, config, u0=u0)
            its = len(history) - 1 if history[-1] < config.tol or len(history) == 1 else None
        except DivergenceError:
            its = None
        failed |= its is None
        results.append((name, its))
        print(f"{name:>20s}  {'inf' if its is None else its}")
    with open(_out(args, "hybrid.csv"), "w") as fh:
        fh.write("scenario,iterations\n")
        for name, its in results:
            fh.write(f"{name},{'inf' if its is None else its}\n")
    return 1 if failed else 0


COMMANDS = {"solve": run_solve, "equivalence": run_equivalence, "bench": run_bench,
            "hybrid": run_hybrid}


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CoarseningError, LayoutError, SingularMatrixError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
