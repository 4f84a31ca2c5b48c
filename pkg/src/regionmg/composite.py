"""Classical multigrid on assembled (composite) matrices.

This is the reference the region solver is checked against: the same cycle
and smoothers, but with global grid transfers built directly on the full
tensor grid and Galerkin operators formed from composite matrices. It runs
in serial and its Gauss-Seidel is the true lexicographic one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from . import kernels
from .multigrid import POWER_SEED, CoarseningError, CycleConfig, DivergenceError, chebyshev_bounds
from .sparse import LuFactorization, SparseMatrix, spmv, triple_product
from .transfers import select_coarse_points, structured_interp


@dataclass
class CompositeHierarchy:
    A: List[SparseMatrix]
    P: List[SparseMatrix]
    R: List[SparseMatrix]
    diag: List[np.ndarray]
    lu: LuFactorization
    lam: List = None

    @property
    def n_levels(self):
        return len(self.A)


def composite_setup(A, dims, n_levels=3, rate=3, transfer="linear"):
    """Hierarchy with tensor transfers on the global grid ``dims``."""
    if n_levels < 2:
        raise CoarseningError("a hierarchy needs at least two levels")
    dims = tuple(int(d) for d in dims)
    As, Ps, Rs = [A], [], []
    for lev in range(n_levels - 1):
        axes = [select_coarse_points(n, rate) for n in dims]
        P = structured_interp(dims, axes, transfer)
        R = P.T
        Ps.append(P)
        Rs.append(R)
        As.append(triple_product(R, As[-1], P))
        dims = tuple(len(a) for a in axes)
    return CompositeHierarchy(As, Ps, Rs, [M.diagonal() for M in As], LuFactorization(As[-1]),
                              [None] * n_levels)


def _power(A, d, iters):
    v = np.random.default_rng(POWER_SEED).standard_normal(A.n_rows)
    lam = 0.0
    for _ in range(iters):
        v = v / np.linalg.norm(v)
        w = spmv(A, v) / d
        lam = float(np.dot(v, w))
        v = w
    return lam


def _smooth(h, lev, u, b, config, post):
    A, d = h.A[lev], h.diag[lev]
    for _ in range(config.post_sweeps if post else config.pre_sweeps):
        s = config.smoother
        if s == "jacobi":
            for _ in range(config.sweeps):
                u = u + config.omega * (b - spmv(A, u)) / d
        elif s in ("gauss_seidel", "symmetric_gs"):
            dirs = (False,) if s == "gauss_seidel" else (False, True)
            for _ in range(config.sweeps):
                for backward in dirs:
                    r = b - spmv(A, u)
                    u = u.copy()
                    kernels.gs_sweep(A.row_ptr, A.col_idx, A.values, d, r, u, config.omega,
                                     backward)
        else:
            if h.lam[lev] is None:
                h.lam[lev] = _power(A, d, config.power_iters)
            alpha, beta = chebyshev_bounds(h.lam[lev], config.eig_ratio, config.boost)
            theta = 0.5 * (alpha + beta)
            delta = 2.0 / (beta - alpha)
            rho = 1.0 / (theta * delta)
            dd = (delta / theta) * (b - spmv(A, u)) / d
            for _ in range(config.degree + 1):
                u = u + dd
                r = b - spmv(A, u)
                rho_old, rho = rho, 1.0 / (2.0 * theta * delta - rho)
                dd = rho * rho_old * dd + 2.0 * rho * delta * r / d
    return u


def _cycle(h, lev, u, b, config):
    if lev == h.n_levels - 1:
        return h.lu.solve(b)
    u = _smooth(h, lev, u, b, config, False)
    rc = spmv(h.R[lev], b - spmv(h.A[lev], u))
    ec = np.zeros(rc.size)
    for _ in range(config.gamma if lev + 1 < h.n_levels - 1 else 1):
        ec = _cycle(h, lev + 1, ec, rc, config)
    u = u + spmv(h.P[lev], ec)
    return _smooth(h, lev, u, b, config, True)


def composite_solve(h, b, config, u0=None):
    b = np.asarray(b, dtype=np.float64)
    u = np.zeros(b.size) if u0 is None else np.array(u0, dtype=np.float64)
    A = h.A[0]
    r0 = np.linalg.norm(b - spmv(A, u))
    history = [1.0]
    if r0 == 0.0:
        return u, history
    for _ in range(config.max_iters):
        u = _cycle(h, 0, u, b, config)
        rel = float(np.linalg.norm(b - spmv(A, u)) / r0)
        history.append(rel)
        if not np.isfinite(rel) or rel > 10.0 * min(history):
            raise DivergenceError(history)
        if rel < config.tol:
            break
    return u, history


def composite_reference_solve(A, b, config: CycleConfig, dims, n_levels=3, rate=3,
                              transfer="linear", u0=None):
    """Set up and run the composite reference multigrid; returns ``(u, history)``."""
    return composite_solve(composite_setup(A, dims, n_levels, rate, transfer), b, config, u0)


__all__ = ["CompositeHierarchy", "composite_setup", "composite_solve",
           "composite_reference_solve"]
