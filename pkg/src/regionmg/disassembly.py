"""Region matrices: splitting an assembled operator and putting it back together."""
from __future__ import annotations

import os

import numpy as np

from .layout import LayoutError, RegionLayout, RegionVector, read_layout, write_layout
from .parallel import region_map
from .sparse import SparseMatrix, read_matrix_market, spmv, write_matrix_market

SPLIT = "split"
REPLICATED = "interface_replicated"


class NonConformalError(ValueError):
    """A matrix edge couples nodes that share no region."""

    def __init__(self, i, j):
        self.edge = (int(i), int(j))
        super().__init__(f"edge ({i}, {j}) has no common region; layout is not conformal")


class RegionMatrix:
    """Block-diagonal collection of per-region sparse blocks.

    ``form`` is ``"split"`` for operators whose blocks sum to the composite
    matrix, or ``"interface_replicated"`` for transfers whose co-located rows
    are copies of the composite stencil. Block ``k`` maps the slots of region
    ``k`` in ``col_layout`` to those in ``row_layout``.
    """

    def __init__(self, row_layout, blocks, form, col_layout=None):
        if form not in (SPLIT, REPLICATED):
            raise ValueError(f"unknown region matrix form {form!r}")
        col_layout = row_layout if col_layout is None else col_layout
        if len(blocks) != row_layout.n_regions or col_layout.n_regions != row_layout.n_regions:
            raise LayoutError("one block per region required")
        for k, B in enumerate(blocks):
            want = (row_layout.regions[k].size, col_layout.regions[k].size)
            if B.shape != want:
                raise LayoutError(f"block {k} has shape {B.shape}, expected {want}")
        self.row_layout = row_layout
        self.col_layout = col_layout
        self.blocks = list(blocks)
        self.form = form

    @property
    def layout(self):
        return self.row_layout

    @property
    def nnz(self):
        return sum(B.nnz for B in self.blocks)

    def transpose(self):
        return RegionMatrix(self.col_layout, [B.T for B in self.blocks], self.form,
                            col_layout=self.row_layout)

    @property
    def T(self):
        return self.transpose()

    def diagonal(self):
        """Per-block diagonals, concatenated in slot order."""
        return np.concatenate([B.diagonal() for B in self.blocks])

    def __repr__(self):
        return f"RegionMatrix({self.form}, regions={len(self.blocks)}, nnz={self.nnz})"


def edge_share_counts(layout, rows, cols):
    """Number of regions containing both endpoints of each edge ``(rows[p], cols[p])``."""
    masks = layout.membership_masks()
    return np.bitwise_count(masks[rows] & masks[cols]).sum(axis=1).astype(np.int64)


def _gather_rows(A, ids):
    """Entry positions of the rows ``ids`` of ``A`` plus their local row numbers."""
    starts = A.row_ptr[ids]
    lens = A.row_ptr[ids + 1] - starts
    local_rows = np.repeat(np.arange(ids.size), lens)
    within = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
    return np.repeat(starts, lens) + within, local_rows


def split_matrix(A, layout, workers=1):
    """Split a composite matrix into per-region blocks (edge-scaling split).

    Off-diagonal ``A[i, j]`` goes to each of the ``q_ij`` regions containing
    both ``i`` and ``j`` with weight ``1/q_ij``. The diagonal of every block is
    chosen so that the block's row sum equals the composite row sum divided by
    the node's sharing count; zero-row-sum operators therefore give zero
    row-sum blocks.
    """
    if A.shape != (layout.n_composite, layout.n_composite):
        raise LayoutError(f"matrix {A.shape} does not match layout with {layout.n_composite} nodes")
    rows, cols = A.row_ids, A.col_idx.astype(np.int64)
    off = rows != cols
    q_edge = np.ones(A.nnz, dtype=np.int64)
    shared = off & (layout.q[rows] > 1) & (layout.q[cols] > 1)
    q_edge[shared] = edge_share_counts(layout, rows[shared], cols[shared])
    # an edge touching an interior node lies inside that node's single region
    single = off & ~shared
    lone = np.where(layout.q[rows] == 1, rows, cols)[single]
    other = np.where(layout.q[rows] == 1, cols, rows)[single]
    lone_region = layout.slot_region[layout.mem_slot[layout.mem_ptr[lone]]]
    hit = np.zeros(lone.size, dtype=bool)
    for k in range(layout.n_regions):
        sel = lone_region == k
        if sel.any():
            hit[sel] = layout.composite_to_local(k)[other[sel]] >= 0
    q_edge[np.flatnonzero(single)[~hit]] = 0
    bad = np.flatnonzero(off & (q_edge == 0))
    if bad.size:
        raise NonConformalError(rows[bad[0]], cols[bad[0]])
    scaled = A.values / q_edge
    target = A.row_sums() / layout.q

    def one(k):
        ids = layout.region_to_composite_ids(k)
        loc = layout.composite_to_local(k)
        pos, lrow = _gather_rows(A, ids)
        lcol = loc[cols[pos]]
        keep = (lcol >= 0) & off[pos]
        pos, lrow, lcol = pos[keep], lrow[keep], lcol[keep]
        vals = scaled[pos]
        diag = target[ids] - np.bincount(lrow, weights=vals, minlength=ids.size)
        n = ids.size
        return SparseMatrix.from_coo(np.concatenate([lrow, np.arange(n)]),
                                     np.concatenate([lcol, np.arange(n)]),
                                     np.concatenate([vals, diag]), (n, n))

    return RegionMatrix(layout, region_map(one, range(layout.n_regions), workers), SPLIT)


def to_composite_matrix(RA, combine=None):
    """Reassemble ``Psi [[A]] Psi^T`` by summing co-located rows and columns.

    Replicated-interface blocks hold copies, not pieces, so summing them is
    wrong; they are only accepted with ``combine="first"``, which keeps the
    row of the lowest region containing each node.
    """
    rl, cl = RA.row_layout, RA.col_layout
    if RA.form == REPLICATED and combine != "first":
        raise ValueError("interface-replicated matrices need combine='first'")
    rows, cols, vals = [], [], []
    for k, B in enumerate(RA.blocks):
        r_ids = rl.region_to_composite_ids(k)
        c_ids = cl.region_to_composite_ids(k)
        sel = slice(None)
        if combine == "first":
            sel = rl.first_slot[rl.region_slice(k)][B.row_ids]
        rows.append(r_ids[B.row_ids[sel]])
        cols.append(c_ids[B.col_idx[sel]])
        vals.append(B.values[sel])
    return SparseMatrix.from_coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                                 (rl.n_composite, cl.n_composite))


def blockwise_matvec(RA, data, workers=1):
    """Per-block products on a flat region array, no interface communication."""
    rl, cl = RA.row_layout, RA.col_layout
    parts = region_map(lambda k: spmv(RA.blocks[k], data[cl.region_slice(k)]),
                       range(len(RA.blocks)), workers)
    return np.concatenate(parts) if parts else np.zeros(rl.n_slots)


def region_matvec(RA, ru, workers=1, check=True):
    """``Psi^T Psi [[A]] [[u]]`` for a split operator and consistent ``[[u]]``."""
    if not isinstance(ru, RegionVector) or not RA.col_layout.same_as(ru.layout):
        raise LayoutError("region vector does not match the matrix layout")
    if check:
        scale = max(1.0, float(np.max(np.abs(ru.data)))) if ru.data.size else 1.0
        if RA.col_layout.inconsistency(ru.data) > 1e-12 * scale:
            raise LayoutError("region vector is not interface-consistent; "
                              "call make_consistent first")
    y = blockwise_matvec(RA, ru.data, workers)
    return RegionVector(RA.row_layout, RA.row_layout.interface_sum_flat(y))


# ---------------------------------------------------------------------------
# Serialisation: one MatrixMarket file per block next to the layout file(s)


def save_region_matrix(directory, RA):
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "manifest.txt"), "w") as fh:
        fh.write(f"form {RA.form}\nregions {len(RA.blocks)}\n")
        fh.write(f"col_layout {'same' if RA.col_layout is RA.row_layout else 'col_layout.txt'}\n")
    write_layout(os.path.join(directory, "layout.txt"), RA.row_layout)
    if RA.col_layout is not RA.row_layout:
        write_layout(os.path.join(directory, "col_layout.txt"), RA.col_layout)
    for k, B in enumerate(RA.blocks):
        write_matrix_market(os.path.join(directory, f"block_{k}.mtx"), B)


def load_region_matrix(directory):
    meta = {}
    with open(os.path.join(directory, "manifest.txt")) as fh:
        for line in fh:
            key, _, value = line.strip().partition(" ")
            meta[key] = value
    row_layout = read_layout(os.path.join(directory, "layout.txt"))
    col_layout = row_layout
    if meta.get("col_layout", "same") != "same":
        col_layout = read_layout(os.path.join(directory, meta["col_layout"]))
    blocks = [read_matrix_market(os.path.join(directory, f"block_{k}.mtx"))
              for k in range(int(meta["regions"]))]
    return RegionMatrix(row_layout, blocks, meta["form"], col_layout=col_layout)


__all__ = [
    "RegionMatrix", "NonConformalError", "split_matrix", "to_composite_matrix", "region_matvec",
    "blockwise_matvec", "edge_share_counts", "save_region_matrix", "load_region_matrix",
    "SPLIT", "REPLICATED", "RegionLayout",
]
