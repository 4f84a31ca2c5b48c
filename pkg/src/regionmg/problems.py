"""Model problems: finite-difference Poisson operators and grid-of-regions partitions."""
from __future__ import annotations

import itertools

import numpy as np

from .layout import LayoutError, RegionDesc, RegionLayout
from .sparse import SparseMatrix, stencil_pattern

STENCILS = ("5pt", "9pt", "7pt3d", "27pt")


def _offsets(stencil, ndim):
    if stencil == "27pt":
        if ndim != 3:
            raise ValueError("the 27pt stencil needs dim=3")
        return [o for o in itertools.product((-1, 0, 1), repeat=3)]
    if stencil == "9pt":
        if ndim != 2:
            raise ValueError("the 9pt stencil needs dim=2")
        return [o for o in itertools.product((-1, 0, 1), repeat=2)]
    if stencil == "5pt":
        if ndim != 2:
            raise ValueError("the 5pt stencil needs dim=2")
    elif stencil == "7pt3d":
        if ndim != 3:
            raise ValueError("the 7pt3d stencil needs dim=3")
    else:
        raise ValueError(f"unknown stencil {stencil!r}; expected one of {STENCILS}")
    out = []
    for ax in reversed(range(ndim)):
        off = [0] * ndim
        off[ax] = -1
        out.append(tuple(off))
    out.append((0,) * ndim)
    for ax in range(ndim):
        off = [0] * ndim
        off[ax] = 1
        out.append(tuple(off))
    return out


def gen_poisson(dim, dims, stencil=None, bc="dirichlet"):
    """Finite-difference Laplacian on an x-fastest grid.

    Parameters
    ----------
    dim : int
        2 or 3.
    dims : sequence of int
        Points per axis. Axes of length one are allowed, so ``dims=(n, 1)``
        with the 5-point stencil gives the 1D ``[-1, 2, -1]`` operator.
    stencil : {"5pt", "9pt", "7pt3d", "27pt"}, optional
        Defaults to ``"5pt"`` in 2D and ``"7pt3d"`` in 3D. ``"27pt"`` is the
        trilinear hexahedral finite-element Laplacian scaled by ``12/h``:
        centre 32, edge neighbours -2, corner neighbours -1, face neighbours
        0 (kept as explicit zeros). ``"9pt"`` is its bilinear 2D analogue
        scaled by ``3``.
    bc : {"dirichlet", "neumann"}
        Dirichlet keeps the full interior diagonal at boundary nodes (the
        eliminated boundary values only show up in the right-hand side);
        Neumann sets the diagonal to the number of neighbours, giving zero
        row sums.

    Returns
    -------
    SparseMatrix
    """
    dims = tuple(int(d) for d in dims)
    if dim not in (2, 3) or len(dims) != dim:
        raise ValueError(f"dims {dims} do not describe a {dim}-d grid")
    if stencil is None:
        stencil = "5pt" if dim == 2 else "7pt3d"
    if bc not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if min(dims) < 1:
        raise ValueError("every axis needs at least one point")
    offsets = _offsets(stencil, dim)
    # flat x-fastest offsets must increase along the list
    strides = np.cumprod((1,) + dims[:-1])
    offsets.sort(key=lambda o: int(np.dot(o, strides)))
    row_ptr, col_idx, valid = stencil_pattern(dims, offsets)
    centre = offsets.index((0,) * dim)
    if stencil == "27pt":
        # weight by how many axes the offset moves along: face, edge, corner
        weight = np.array([(0.0, 0.0, -2.0, -1.0)[sum(map(abs, o))] for o in offsets])
        full = 32.0
    else:
        weight = -np.ones(len(offsets))
        weight[centre] = 0.0
        active = sum(d > 1 for d in dims)
        full = 3 ** active - 1 if stencil == "9pt" else 2 * active
    vals = np.where(valid, weight, 0.0)
    vals[:, centre] = -vals.sum(axis=1) if bc == "neumann" else full
    return SparseMatrix(int(np.prod(dims)), int(np.prod(dims)), row_ptr, col_idx, vals[valid],
                        check=False)


# ---------------------------------------------------------------------------
# Grid of regions


def axis_partition(n, count, uneven=False):
    """Boundary indices splitting ``n`` points into ``count`` conforming spans.

    Neighbouring spans share their boundary point.
    """
    if count < 1 or count > max(n - 1, 1):
        raise LayoutError(f"cannot split {n} points into {count} regions")
    if n == 1:
        return np.zeros(2, dtype=np.int64)
    if (n - 1) % count and not uneven:
        raise LayoutError(f"{n - 1} intervals are not divisible by {count} regions")
    return (np.arange(count + 1) * (n - 1)) // count


def region_grid_layout(dims, counts, uneven=False):
    """Layout of a tensor grid cut into a tensor arrangement of regions.

    Region ``rx + Rx*(ry + Ry*rz)`` covers the box between consecutive
    partition planes; shared planes are replicated. Local numbering is
    x-fastest, which is also ascending composite order.
    """
    dims = tuple(int(d) for d in dims)
    counts = tuple(int(c) for c in counts)
    if len(dims) != len(counts):
        raise LayoutError("dims and region counts differ in length")
    bounds = [axis_partition(n, c, uneven) for n, c in zip(dims, counts)]
    strides = np.cumprod((1,) + dims[:-1])
    descs, r2c, axes = [], [], []
    for rid, rc in enumerate(itertools.product(*[range(c) for c in counts[::-1]])):
        rc = rc[::-1]
        ranges = [np.arange(b[r], b[r + 1] + 1) for b, r in zip(bounds, rc)]
        grids = np.meshgrid(*ranges[::-1], indexing="ij")[::-1]
        ids = sum(g.ravel() * s for g, s in zip(grids, strides))
        descs.append(RegionDesc.structured(rid, [len(r) for r in ranges]))
        r2c.append(np.asarray(ids, dtype=np.int64))
        axes.append(tuple(ranges))
    n = int(np.prod(dims))
    coords = np.stack(np.unravel_index(np.arange(n), dims[::-1])[::-1], axis=1)
    return RegionLayout(n, descs, r2c, coords=coords, axes=axes)


def gen_region_grid(dims, counts, uneven=False):
    """Membership lists and region descriptors of a grid of regions.

    Returns ``(membership, descs)`` in the form accepted by
    :func:`regionmg.layout.build_layout`.
    """
    layout = region_grid_layout(dims, counts, uneven)
    return layout.regions_per_node, list(layout.regions)


def flag_regions(layout, unstructured_ids):
    """Mark regions as unstructured; their grid geometry stays in ``layout.axes``."""
    ids = sorted(set(int(i) for i in unstructured_ids))
    for i in ids:
        if not 0 <= i < layout.n_regions:
            raise LayoutError(f"unknown region {i}")
    descs = [RegionDesc.unstructured(d.region_id, d.size) if d.region_id in ids else d
             for d in layout.regions]
    return layout.with_regions(descs)


def cube_scenarios(counts=(3, 3, 3)):
    """Named sets of unstructured regions for the hybrid study on a region cube."""
    Rx, Ry, Rz = counts
    rid = {(x, y, z): x + Rx * (y + Ry * z) for z in range(Rz) for y in range(Ry) for x in range(Rx)}

    def pick(pred):
        return sorted(r for c, r in rid.items() if pred(*c))

    ends = lambda v, n: v in (0, n - 1)  # noqa: E731
    out = {
        "none": [],
        "all": sorted(rid.values()),
        "front": pick(lambda x, y, z: y == 0),
        "back": pick(lambda x, y, z: y == Ry - 1),
        "left": pick(lambda x, y, z: x == 0),
        "right": pick(lambda x, y, z: x == Rx - 1),
        "bottom": pick(lambda x, y, z: z == 0),
        "top": pick(lambda x, y, z: z == Rz - 1),
        "corners": pick(lambda x, y, z: ends(x, Rx) and ends(y, Ry) and ends(z, Rz)),
    }
    m = Rx * Ry * Rz
    singles = [r for r in (2, 13, 24) if r < m]
    for r in singles:
        out[f"region-{r}"] = [r]
    if len(singles) > 1:
        out["regions-" + "-".join(map(str, singles))] = singles
    return out


def parse_counts(text):
    """``"3x3x1"`` -> ``(3, 3, 1)``."""
    try:
        counts = tuple(int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"bad region count {text!r}; expected e.g. 3x3") from None
    if not counts or min(counts) < 1:
        raise ValueError(f"bad region count {text!r}")
    return counts


__all__ = ["gen_poisson", "region_grid_layout", "gen_region_grid", "flag_regions",
           "axis_partition", "cube_scenarios", "parse_counts", "STENCILS"]
