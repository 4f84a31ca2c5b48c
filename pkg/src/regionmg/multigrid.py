"""Region multigrid: hierarchy setup, smoothers, and V/W cycles.

All level data live in region form. Vectors are interface-consistent
(co-located slots hold the same value) between operations; residuals are
formed with an interface summation so they are consistent as well.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import kernels
from .disassembly import blockwise_matvec, split_matrix, to_composite_matrix
from .layout import LayoutError, RegionLayout, RegionVector
from .parallel import region_map
from .sparse import LuFactorization, SingularMatrixError
from .transfers import build_transfers, region_rap

POWER_SEED = 0x5EED
SMOOTHERS = ("jacobi", "gauss_seidel", "symmetric_gs", "chebyshev")


class DivergenceError(RuntimeError):
    """The residual grew by more than a factor of ten over the best seen so far."""

    def __init__(self, history):
        self.history = list(history)
        super().__init__(f"iteration diverged after {len(history) - 1} cycles "
                         f"(relative residual {history[-1]:.3e})")


class CoarseningError(ValueError):
    """The requested number of levels cannot be built."""


@dataclass
class CycleConfig:
    """Cycle and smoother parameters.

    ``pre_sweeps``/``post_sweeps`` count smoother applications per level. A
    Jacobi or Gauss-Seidel application performs ``sweeps`` sweeps; a
    Chebyshev application runs the recurrence with ``degree`` K.
    """

    cycle: str = "v"
    pre_sweeps: int = 1
    post_sweeps: int = 1
    smoother: str = "jacobi"
    omega: float = 1.0
    sweeps: int = 1
    degree: int = 1
    eig_ratio: float = 20.0
    boost: float = 1.1
    power_iters: int = 10
    tol: float = 1e-12
    max_iters: int = 100

    def __post_init__(self):
        self.cycle = self.cycle.lower()
        if self.cycle not in ("v", "w"):
            raise ValueError(f"cycle must be 'v' or 'w', got {self.cycle!r}")
        if self.smoother not in SMOOTHERS:
            raise ValueError(f"unknown smoother {self.smoother!r}; expected one of {SMOOTHERS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.degree < 0 or self.sweeps < 0 or self.pre_sweeps < 0 or self.post_sweeps < 0:
            raise ValueError("sweep counts and degree must be non-negative")
        if self.max_iters < 0 or self.power_iters < 1:
            raise ValueError("max_iters must be >= 0 and power_iters >= 1")

    @property
    def gamma(self):
        return 2 if self.cycle == "w" else 1


@dataclass
class Level:
    layout: RegionLayout
    A: object
    diag: RegionVector
    P: object = None
    R: object = None
    lam_max: Optional[float] = None
    workers: int = 1

    def matvec(self, data):
        """``Psi^T Psi [[A]] data`` on flat region arrays."""
        return self.layout.interface_sum_flat(blockwise_matvec(self.A, data, self.workers))


@dataclass
class Hierarchy:
    levels: List[Level]
    coarse_composite: object
    coarse_factorization: LuFactorization
    transfer: str = "linear"
    rate: int = 3
    info: dict = field(default_factory=dict)

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def fine(self):
        return self.levels[0]


def _make_level(layout, A, workers):
    diag = layout.interface_sum_flat(A.diagonal())
    if np.any(diag == 0):
        slot = int(np.flatnonzero(diag == 0)[0])
        raise SingularMatrixError(int(layout.slot_comp[slot]),
                                  f"zero diagonal at composite node {layout.slot_comp[slot]}")
    return Level(layout, A, RegionVector(layout, diag), workers=workers)


def setup_hierarchy(A, layout, n_levels=3, rate=3, transfer="linear", workers=1):
    """Build the region hierarchy for the composite matrix ``A``.

    ``transfer`` is ``"linear"`` or ``"constant"``; layouts with unstructured
    regions need ``"constant"`` (hybrid aggregation). A level whose coarse
    space is as large as the fine one may only be the last level.
    """
    if n_levels < 2:
        raise CoarseningError("a hierarchy needs at least two levels")
    RA = split_matrix(A, layout, workers)
    levels = [_make_level(layout, RA, workers)]
    for lev in range(n_levels - 1):
        cur = levels[-1]
        P, R, coarse_layout = build_transfers(cur.layout, cur.A, rate, transfer, workers)
        if coarse_layout.n_composite >= cur.layout.n_composite and lev < n_levels - 2:
            raise CoarseningError(f"level {lev + 1} does not shrink "
                                  f"({coarse_layout.n_composite} unknowns); use fewer levels")
        cur.P, cur.R = P, R
        levels.append(_make_level(coarse_layout, region_rap(R, cur.A, P, workers), workers))
    Ac = to_composite_matrix(levels[-1].A)
    return Hierarchy(levels, Ac, LuFactorization(Ac), transfer, rate)


# ---------------------------------------------------------------------------
# Level operations on region vectors


def _check(level, rv):
    if not isinstance(rv, RegionVector) or not level.layout.same_as(rv.layout):
        raise LayoutError("region vector does not belong to this level")


def regional_residual(level, u, b):
    """``[[b]] - Psi^T Psi [[A]] [[u]]``."""
    _check(level, u)
    _check(level, b)
    return RegionVector(level.layout, b.data - level.matvec(u.data))


def _jacobi(level, u, b, omega):
    return u + omega * (b - level.matvec(u)) / level.diag.data


def jacobi_sweep(level, u, b, omega):
    """One damped Jacobi update with the composite diagonal in region form."""
    _check(level, u)
    _check(level, b)
    return RegionVector(level.layout, _jacobi(level, u.data, b.data, omega))


def _gs(level, u, b, omega, sweeps, backward=False):
    lay = level.layout
    A = level.A
    d = level.diag.data
    for _ in range(sweeps):
        r = b - level.matvec(u)

        def one(k):
            sl = lay.region_slice(k)
            B = A.blocks[k]
            uk = u[sl].copy()
            rk = r[sl].copy()
            kernels.gs_sweep(B.row_ptr, B.col_idx, B.values, d[sl], rk, uk, omega, backward)
            return uk

        u = np.concatenate(region_map(one, range(lay.n_regions), level.workers))
        u = lay.make_consistent_flat(u)
    return u


def gauss_seidel_sweeps(level, u, b, omega=1.0, sweeps=1, backward=False):
    """Region-local Gauss-Seidel.

    Each outer sweep computes the true regional residual once; every region
    then runs a forward (or backward) Gauss-Seidel pass over its own rows,
    downdating only its local residual copy. Co-located values are averaged
    afterwards so the iterate stays interface-consistent.
    """
    _check(level, u)
    _check(level, b)
    if sweeps == 0:
        return u.copy()
    return RegionVector(level.layout, _gs(level, u.data, b.data, omega, sweeps, backward))


def power_method_eigmax(level, iters=10, scaled=True):
    """Estimate the largest eigenvalue of ``D^-1 A`` (or ``A`` if not ``scaled``).

    The start vector is drawn from a fixed seed in composite form and
    replicated, so every layout of the same problem starts identically.
    """
    if iters < 1:
        raise ValueError("power method needs at least one iteration")
    lay = level.layout
    rng = np.random.default_rng(POWER_SEED)
    v = lay.gather(rng.standard_normal(lay.n_composite))
    inv_d = 1.0 / level.diag.data if scaled else np.ones(lay.n_slots)
    lam = 0.0
    for _ in range(iters):
        nrm = lay.composite_norm(v)
        if nrm == 0.0 or not np.isfinite(nrm):
            raise ArithmeticError("power method broke down (zero iterate)")
        v = v / nrm
        w = inv_d * level.matvec(v)
        lam = lay.composite_dot(v, w)
        v = w
    return lam


def chebyshev_bounds(lam, eig_ratio=20.0, boost=1.1):
    alpha = lam / eig_ratio
    beta = boost * lam
    if not beta > alpha:
        raise ValueError(f"empty Chebyshev interval [{alpha}, {beta}]")
    return alpha, beta


def _chebyshev(level, u, b, degree, alpha, beta):
    theta = 0.5 * (alpha + beta)
    delta = 2.0 / (beta - alpha)
    inv_d = 1.0 / level.diag.data
    rho = 1.0 / (theta * delta)
    r = b - level.matvec(u)
    d = (delta / theta) * inv_d * r
    for _ in range(degree + 1):
        u = u + d
        r = b - level.matvec(u)
        rho_old = rho
        rho = 1.0 / (2.0 * theta * delta - rho_old)
        d = rho * rho_old * d + 2.0 * rho * delta * inv_d * r
    return u


def chebyshev_apply(level, u, b, degree=1, eig_ratio=20.0, boost=1.1, power_iters=10):
    """Chebyshev smoothing with the regional residual.

    The loop runs for ``k = 0..degree``, i.e. ``degree + 1`` corrections.
    ``level.lam_max`` is estimated on first use and cached.
    """
    _check(level, u)
    _check(level, b)
    if level.lam_max is None:
        level.lam_max = power_method_eigmax(level, power_iters)
    alpha, beta = chebyshev_bounds(level.lam_max, eig_ratio, boost)
    return RegionVector(level.layout, _chebyshev(level, u.data, b.data, degree, alpha, beta))


def restrict_residual(level, r):
    """``Psi_c^T Psi_c [[R]] (Psi Psi^T)^-1 [[r]]``."""
    _check(level, r)
    if level.R is None:
        raise ValueError("the coarsest level has no restriction")
    return RegionVector(level.R.row_layout, _restrict(level, r.data))


def _restrict(level, r):
    scaled = level.layout.interface_scale_flat(r)
    return level.R.row_layout.interface_sum_flat(blockwise_matvec(level.R, scaled, level.workers))


def prolongate_correction(level, uc):
    """``[[P]] [[u_c]]``: per-region products, no interface exchange."""
    if level.P is None:
        raise ValueError("the coarsest level has no interpolation")
    if not level.P.col_layout.same_as(uc.layout):
        raise LayoutError("coarse vector does not match the interpolation")
    return RegionVector(level.layout, blockwise_matvec(level.P, uc.data, level.workers))


# ---------------------------------------------------------------------------
# Cycles


def _smooth(level, u, b, config, post=False):
    s = config.smoother
    for _ in range(config.post_sweeps if post else config.pre_sweeps):
        if s == "jacobi":
            for _ in range(config.sweeps):
                u = _jacobi(level, u, b, config.omega)
        elif s == "gauss_seidel":
            u = _gs(level, u, b, config.omega, config.sweeps)
        elif s == "symmetric_gs":
            for _ in range(config.sweeps):
                u = _gs(level, u, b, config.omega, 1, backward=False)
                u = _gs(level, u, b, config.omega, 1, backward=True)
        else:
            if level.lam_max is None:
                level.lam_max = power_method_eigmax(level, config.power_iters)
            alpha, beta = chebyshev_bounds(level.lam_max, config.eig_ratio, config.boost)
            u = _chebyshev(level, u, b, config.degree, alpha, beta)
    return u


def _coarse_solve(h, b):
    lay = h.levels[-1].layout
    return lay.gather(h.coarse_factorization.solve(lay.average_to_composite(b)))


def _cycle(h, lev, u, b, config):
    if lev == h.n_levels - 1:
        return _coarse_solve(h, b)
    level = h.levels[lev]
    u = _smooth(level, u, b, config)
    rc = _restrict(level, b - level.matvec(u))
    ec = np.zeros(level.R.row_layout.n_slots)
    for _ in range(config.gamma if lev + 1 < h.n_levels - 1 else 1):
        ec = _cycle(h, lev + 1, ec, rc, config)
    u = u + blockwise_matvec(level.P, ec, level.workers)
    return _smooth(level, u, b, config, post=True)


def cycle(hierarchy, u, b, config):
    """One V- or W-cycle on the finest level."""
    _check(hierarchy.fine, u)
    _check(hierarchy.fine, b)
    return RegionVector(hierarchy.fine.layout, _cycle(hierarchy, 0, u.data, b.data, config))


def solve(hierarchy, b, config, u0=None):
    """Stand-alone multigrid iteration.

    Parameters
    ----------
    hierarchy : Hierarchy
    b : ndarray
        Composite right-hand side.
    config : CycleConfig
    u0 : ndarray, optional
        Composite initial guess (zero by default).

    Returns
    -------
    u : ndarray
        Composite solution (average of the region copies).
    history : list of float
        Relative residual norms, ``history[0] == 1``.

    Raises
    ------
    DivergenceError
        If a residual exceeds ten times the smallest one seen so far.
    """
    lay = hierarchy.fine.layout
    bb = lay.gather(np.asarray(b, dtype=np.float64))
    u = np.zeros(lay.n_slots) if u0 is None else lay.gather(np.asarray(u0, dtype=np.float64))
    fine = hierarchy.fine
    r0 = lay.composite_norm(bb - fine.matvec(u))
    history = [1.0]
    if r0 == 0.0:
        return lay.average_to_composite(u), history
    for _ in range(config.max_iters):
        u = _cycle(hierarchy, 0, u, bb, config)
        rel = lay.composite_norm(bb - fine.matvec(u)) / r0
        history.append(rel)
        if not np.isfinite(rel) or rel > 10.0 * min(history):
            raise DivergenceError(history)
        if rel < config.tol:
            break
    return lay.average_to_composite(u), history


__all__ = [
    "CycleConfig", "Level", "Hierarchy", "DivergenceError", "CoarseningError",
    "setup_hierarchy", "regional_residual", "jacobi_sweep", "gauss_seidel_sweeps",
    "power_method_eigmax", "chebyshev_bounds", "chebyshev_apply", "restrict_residual",
    "prolongate_correction", "cycle", "solve", "POWER_SEED", "SMOOTHERS",
]
