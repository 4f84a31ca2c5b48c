"""Grid transfers between region levels and the region Galerkin product.

Structured regions use tensor-product transfers built from per-axis coarse
point lists. Because every region decides its coarse points and weights from
its own axis lengths only, two regions sharing an interface build identical
copies of the interface rows without talking to each other. Unstructured
regions (hybrid mode) aggregate their interface nodes first, using the
structured geometry of the interface, and then aggregate the interior
greedily.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .disassembly import REPLICATED, SPLIT, RegionMatrix, _gather_rows, to_composite_matrix
from .layout import CoarsePoints, LayoutError, RegionDesc, coarsen_layout
from .parallel import region_map
from .sparse import DimensionError, SparseMatrix, add, stencil_pattern, triple_product

LINEAR = "linear"
CONSTANT = "constant"


class AggregationError(ValueError):
    """An interface node whose aggregate root cannot be deduced."""


# ---------------------------------------------------------------------------
# Coarse points


def select_coarse_points(region, rate):
    """Every ``rate``-th index along an axis, plus the last one.

    ``region`` is either an axis length (returns an index array) or a
    structured :class:`RegionDesc` (returns the tensor :class:`CoarsePoints`).
    """
    if rate < 2:
        raise ValueError(f"coarsening rate must be at least 2, got {rate}")
    if isinstance(region, RegionDesc):
        if not region.is_structured:
            raise LayoutError(f"region {region.region_id} is unstructured")
        axes = [select_coarse_points(n, rate) for n in region.dims]
        return CoarsePoints.from_axes(axes, region.dims)
    n = int(region)
    if n < 1:
        raise ValueError("axis length must be positive")
    idx = np.arange(0, n, rate, dtype=np.int64)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


def nearest_coarse(n, coarse):
    """For each of ``n`` fine indices, the position of the nearest coarse index.

    Equidistant nodes go to the lower coarse index.
    """
    coarse = np.asarray(coarse, dtype=np.int64)
    f = np.arange(n)
    hi = np.clip(np.searchsorted(coarse, f, side="left"), 0, coarse.size - 1)
    lo = np.clip(hi - 1, 0, coarse.size - 1)
    return np.where(np.abs(f - coarse[lo]) <= np.abs(coarse[hi] - f), lo, hi)


def interp_1d(n, coarse, kind):
    """``n x len(coarse)`` interpolation along one axis."""
    coarse = np.asarray(coarse, dtype=np.int64)
    nc = coarse.size
    f = np.arange(n)
    if kind == CONSTANT or nc == 1:
        cols = nearest_coarse(n, coarse) if nc > 1 else np.zeros(n, dtype=np.int64)
        return SparseMatrix.from_coo(f, cols, np.ones(n), (n, nc))
    if kind != LINEAR:
        raise ValueError(f"unknown transfer kind {kind!r}")
    j = np.clip(np.searchsorted(coarse, f, side="right") - 1, 0, nc - 2)
    lo, hi = coarse[j], coarse[j + 1]
    h = (hi - lo).astype(np.float64)
    w_lo = (hi - f) / h
    w_hi = (f - lo) / h
    on = f == lo
    on_hi = f == hi
    rows = np.concatenate([f, f])
    cols = np.concatenate([j, j + 1])
    vals = np.concatenate([w_lo, w_hi])
    keep = np.concatenate([~on_hi, ~on])
    return SparseMatrix.from_coo(rows[keep], cols[keep], vals[keep], (n, nc))


def kron(A, B):
    """Kronecker product ``A (x) B`` (``B`` index runs fastest)."""
    ra, ca = A.row_ids, A.col_idx.astype(np.int64)
    rb, cb = B.row_ids, B.col_idx.astype(np.int64)
    rows = (ra[:, None] * B.n_rows + rb[None, :]).ravel()
    cols = (ca[:, None] * B.n_cols + cb[None, :]).ravel()
    vals = (A.values[:, None] * B.values[None, :]).ravel()
    return SparseMatrix.from_coo(rows, cols, vals, (A.n_rows * B.n_rows, A.n_cols * B.n_cols))


def structured_interp(dims, axes, kind):
    """Tensor-product interpolation on an x-fastest grid."""
    mats = [interp_1d(n, c, kind) for n, c in zip(dims, axes)]
    P = mats[0]
    for M in mats[1:]:
        P = kron(M, P)
    return P


# ---------------------------------------------------------------------------
# Hybrid aggregation


@dataclass
class Aggregation:
    """Aggregates of one region.

    ``agg[i]`` is the aggregate of local node ``i``; ``roots[a]`` is the root
    node of aggregate ``a``. Aggregates are numbered by ascending root.
    """

    agg: np.ndarray
    roots: np.ndarray
    n_interface: int = 0

    @property
    def n_aggregates(self):
        return int(self.roots.size)

    @property
    def coarse_points(self):
        return CoarsePoints(self.roots)


def _coarse_coords(layout, r, rate):
    return [np.asarray(ax)[select_coarse_points(len(ax), rate)] for ax in layout.axes[r]]


def _nearest_value(values, coarse_values):
    """Nearest entry of sorted ``coarse_values`` for each value (ties go low)."""
    hi = np.clip(np.searchsorted(coarse_values, values, side="left"), 0, coarse_values.size - 1)
    lo = np.clip(hi - 1, 0, coarse_values.size - 1)
    pick = np.where(np.abs(values - coarse_values[lo]) <= np.abs(coarse_values[hi] - values), lo, hi)
    return coarse_values[pick]


def hybrid_aggregation(layout, k, A_block, rate=3):
    """Interface-first aggregation of region ``k``.

    Phase 1 groups every interface node with the node that a structured
    neighbour would pick as its coarse point (nearest coarse coordinate along
    each axis, ties to the lower one). Phase 2 aggregates the remaining nodes
    greedily: the lowest-index free node becomes a root and takes its free
    graph neighbours.
    """
    n = layout.regions[k].size
    if A_block.shape != (n, n):
        raise DimensionError(f"region {k}: block {A_block.shape} for {n} nodes")
    sl = layout.region_slice(k)
    ids = layout.slot_comp[sl]
    iface = np.flatnonzero(layout.slot_q[sl] > 1)
    root_of = np.full(n, -1, dtype=np.int64)
    if iface.size:
        if layout.coords is None or layout.axes is None:
            raise AggregationError(f"region {k}: interface nodes but no grid geometry")
        coords = np.asarray(layout.coords)
        ncoord = coords.max(axis=0) + 1
        strides = np.cumprod(np.concatenate([[1], ncoord[:-1]]))
        key = coords[ids] @ strides
        order = np.argsort(key)
        cache = {}
        for i in iface:
            comp = ids[i]
            regs = layout.mem_region[layout.mem_ptr[comp]:layout.mem_ptr[comp + 1]]
            src = next((int(r) for r in regs if layout.axes[r] is not None), None)
            if src is None:
                raise AggregationError(f"composite node {comp}: no region with known geometry")
            if src not in cache:
                cache[src] = _coarse_coords(layout, src, rate)
            target = np.array([_nearest_value(np.array([c]), cc)[0]
                               for c, cc in zip(coords[comp], cache[src])])
            tkey = int(target @ strides)
            pos = np.searchsorted(key[order], tkey)
            if pos >= n or key[order][pos] != tkey:
                raise AggregationError(f"composite node {comp}: root outside region {k}")
            root_of[i] = order[pos]
    # phase 2: greedy over the rest
    is_iface = np.zeros(n, dtype=bool)
    is_iface[iface] = True
    if np.any(root_of[iface] < 0) or np.any(~is_iface[root_of[iface]]):
        raise AggregationError(f"region {k}: interface root is not an interface node")
    taken = is_iface.copy()
    ptr, idx = A_block.row_ptr, A_block.col_idx
    for i in range(n):
        if taken[i]:
            continue
        root_of[i] = i
        taken[i] = True
        for j in idx[ptr[i]:ptr[i + 1]]:
            if not taken[j]:
                taken[j] = True
                root_of[j] = i
    roots, agg = np.unique(root_of, return_inverse=True)
    n_iface = int(np.unique(root_of[iface]).size)
    return Aggregation(agg.astype(np.int64), roots.astype(np.int64), n_iface)


# ---------------------------------------------------------------------------
# Transfer operators


def coarse_axes(layout, rate):
    if layout.axes is None:
        return None
    return [None if ax is None else tuple(a[select_coarse_points(len(a), rate)] for a in
                                          (np.asarray(x) for x in ax))
            for ax in layout.axes]


def _interp_blocks(layout, coarse, kind, workers):
    def one(k):
        desc = layout.regions[k]
        c = coarse[k]
        if isinstance(c, Aggregation):
            n = desc.size
            return SparseMatrix.from_coo(np.arange(n), c.agg, np.ones(n), (n, c.n_aggregates))
        if not desc.is_structured or c.axes is None:
            raise LayoutError(f"region {k}: structured transfer on an unstructured region")
        return structured_interp(desc.dims, c.axes, kind)

    return region_map(one, range(layout.n_regions), workers)


def _as_points(c):
    return c.coarse_points if isinstance(c, Aggregation) else c


def _build_interp(layout, coarse, kind, coarse_layout, rate, workers):
    if coarse_layout is None:
        coarse_layout = coarsen_layout(layout, [_as_points(c) for c in coarse],
                                       axes=coarse_axes(layout, rate) if rate else None)
    P = RegionMatrix(layout, _interp_blocks(layout, coarse, kind, workers), REPLICATED,
                     col_layout=coarse_layout)
    implied_composite_transfer(P)
    return P


def build_linear_interp(layout, coarse, coarse_layout=None, rate=None, workers=1):
    """Region-wise tensor linear interpolation (structured regions only)."""
    if any(isinstance(c, Aggregation) for c in coarse):
        raise LayoutError("linear transfers need structured regions")
    return _build_interp(layout, coarse, LINEAR, coarse_layout, rate, workers)


def build_constant_interp(layout, coarse, coarse_layout=None, rate=None, workers=1):
    """Piecewise-constant interpolation from coarse points or aggregates."""
    for k, c in enumerate(coarse):
        if isinstance(c, Aggregation) and (c.agg.size != layout.regions[k].size or c.agg.min() < 0):
            raise LayoutError(f"region {k}: node left unassigned")
    return _build_interp(layout, coarse, CONSTANT, coarse_layout, rate, workers)


def implied_composite_transfer(P, check=True):
    """The composite operator implied by an interface-replicated transfer.

    Each composite row is taken from the lowest region holding that node.
    With ``check`` every other copy must match it exactly, which also means
    no interface row reaches a coarse node outside the regions sharing it.
    """
    C = to_composite_matrix(P, combine="first")
    if not check:
        return C
    rl, cl = P.row_layout, P.col_layout
    for k, B in enumerate(P.blocks):
        r_ids = rl.region_to_composite_ids(k)
        mine = SparseMatrix.from_coo(B.row_ids, cl.region_to_composite_ids(k)[B.col_idx],
                                     B.values, (B.n_rows, cl.n_composite))
        pos, lrow = _gather_rows(C, r_ids)
        ref_ptr = np.zeros(r_ids.size + 1, dtype=np.int64)
        np.cumsum(np.bincount(lrow, minlength=r_ids.size), out=ref_ptr[1:])
        if not (np.array_equal(mine.row_ptr, ref_ptr)
                and np.array_equal(mine.col_idx, C.col_idx[pos])
                and np.array_equal(mine.values, C.values[pos])):
            bad = np.flatnonzero(np.diff(mine.row_ptr) != np.diff(ref_ptr))
            where = int(r_ids[bad[0]]) if bad.size else "?"
            raise LayoutError(f"region {k}: interface transfer rows differ from another "
                              f"region's copy (near composite node {where})")
    return C


def build_transfers(layout, A, rate=3, kind=LINEAR, workers=1):
    """Coarse points, interpolation ``[[P]]`` and restriction ``[[R]] = [[P]]^T``.

    Unstructured regions are aggregated (``kind`` must then be constant).
    Returns ``(P, R, coarse_layout)``.
    """
    coarse = []
    for k, desc in enumerate(layout.regions):
        if desc.is_structured:
            coarse.append(select_coarse_points(desc, rate))
        else:
            if kind != CONSTANT:
                raise LayoutError("unstructured regions only support constant transfers")
            coarse.append(hybrid_aggregation(layout, k, A.blocks[k], rate))
    build = build_linear_interp if kind == LINEAR else build_constant_interp
    P = build(layout, coarse, rate=rate, workers=workers)
    return P, P.transpose(), P.col_layout


def region_rap(R, A, P, workers=1):
    """Region Galerkin product: ``triple_product(R_k, A_k, P_k)`` per region."""
    if A.form != SPLIT:
        raise ValueError("region_rap expects a split operator")
    if len(R.blocks) != len(A.blocks) or len(P.blocks) != len(A.blocks):
        raise DimensionError("block counts differ")
    blocks = region_map(lambda k: triple_product(R.blocks[k], A.blocks[k], P.blocks[k]),
                        range(len(A.blocks)), workers)
    return RegionMatrix(R.row_layout, blocks, SPLIT)


# ---------------------------------------------------------------------------
# Structured 9-point Galerkin product with piecewise constants

NINE_POINT = tuple((dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1))


def _nine_point_values(A, nx, ny):
    """Values of ``A`` laid out in the full 9-point pattern (zeros padded)."""
    full = (3 * nx - 2 if nx > 1 else 1) * (3 * ny - 2 if ny > 1 else 1)
    if A.nnz > full:
        raise ValueError("stencil wider than 9-point")
    if A.nnz == full:
        return A.values
    # narrower stencil: the index arrays are needed to place the entries
    ptr, idx, _ = stencil_pattern((nx, ny), NINE_POINT)
    n = nx * ny
    key_full = np.repeat(np.arange(n), np.diff(ptr)) * n + idx
    key = A.row_ids * n + A.col_idx
    pos = np.minimum(np.searchsorted(key_full, key), full - 1)
    if np.any(key_full[pos] != key):
        raise ValueError("stencil wider than 9-point")
    vals = np.zeros(full)
    vals[pos] = A.values
    return vals


def fast_rap_2d_const(A, nx, ny, rate=3):
    """Galerkin product for a 9-point operator with piecewise-constant transfers.

    Values are visited in stencil order, so the column index array is never
    read when ``A`` carries the full 9-point pattern. The result matches
    ``triple_product(P^T, A, P)`` with ``P`` from :func:`build_constant_interp`.
    """
    if A.shape != (nx * ny, nx * ny):
        raise DimensionError(f"matrix {A.shape} does not match a {nx}x{ny} grid")
    cx = select_coarse_points(nx, rate)
    cy = select_coarse_points(ny, rate)
    agg_x = nearest_coarse(nx, cx)
    agg_y = nearest_coarse(ny, cy)
    values = _nine_point_values(A, nx, ny)
    stencil = kernels.rap_const_2d(values, nx, ny, agg_x, agg_y, cx.size, cy.size)
    ptr, idx, valid = stencil_pattern((cx.size, cy.size), NINE_POINT)
    return SparseMatrix(cx.size * cy.size, cx.size * cy.size, ptr, idx, stencil[valid],
                        check=False)


def generic_rap_2d_const(A, nx, ny, rate=3):
    """Reference path: constant transfer matrices and two generic products."""
    axes = (select_coarse_points(nx, rate), select_coarse_points(ny, rate))
    P = structured_interp((nx, ny), axes, CONSTANT)
    return triple_product(P.T, A, P)


def max_abs_diff(A, B):
    D = add(A, B, 1.0, -1.0)
    return float(np.max(np.abs(D.values))) if D.nnz else 0.0


__all__ = [
    "select_coarse_points", "nearest_coarse", "interp_1d", "structured_interp", "kron",
    "Aggregation", "AggregationError", "hybrid_aggregation", "coarse_axes",
    "build_linear_interp", "build_constant_interp", "implied_composite_transfer",
    "build_transfers", "region_rap", "fast_rap_2d_const", "generic_rap_2d_const",
    "max_abs_diff", "LINEAR", "CONSTANT",
]
