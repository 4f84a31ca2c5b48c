"""Region layouts: composite <-> region index maps and interface reductions.

A layout describes how ``n`` composite unknowns are replicated into ``n_r``
region unknowns. Region ``k`` owns the contiguous slot range
``offsets[k]:offsets[k+1]`` of every region vector; slot ``s`` is a copy of
composite unknown ``slot_comp[s]``. Every reduction over co-located slots runs
in ascending region id, so results do not depend on how the per-region work
was scheduled.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class LayoutError(ValueError):
    """Inconsistent region layout or region/vector mismatch."""


@dataclass(frozen=True)
class RegionDesc:
    region_id: int
    kind: str
    size: int
    dims: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("structured", "unstructured"):
            raise LayoutError(f"unknown region kind {self.kind!r}")
        if self.kind == "structured":
            if self.dims is None or int(np.prod(self.dims)) != self.size:
                raise LayoutError(
                    f"region {self.region_id}: structured dims {self.dims} do not match size {self.size}")

    @classmethod
    def structured(cls, region_id, dims):
        dims = tuple(int(d) for d in dims)
        return cls(region_id, "structured", int(np.prod(dims)), dims)

    @classmethod
    def unstructured(cls, region_id, size):
        return cls(region_id, "unstructured", int(size), None)

    @property
    def is_structured(self):
        return self.kind == "structured"


@dataclass(frozen=True)
class CoarsePoints:
    """Coarse points picked inside one region.

    ``roots`` holds fine local indices in coarse-local order. Structured
    regions also carry ``axes``, the per-axis fine indices whose tensor
    product (x fastest) gives ``roots``.
    """

    roots: np.ndarray
    axes: Optional[tuple] = None

    @classmethod
    def from_axes(cls, axes, dims):
        axes = tuple(np.asarray(a, dtype=np.int64) for a in axes)
        grids = np.meshgrid(*axes[::-1], indexing="ij")[::-1]
        strides = np.cumprod((1,) + tuple(dims[:-1]))
        roots = sum(g.ravel() * s for g, s in zip(grids, strides))
        return cls(np.asarray(roots, dtype=np.int64), axes)

    @property
    def dims(self):
        return None if self.axes is None else tuple(len(a) for a in self.axes)

    @property
    def size(self):
        return int(self.roots.size)


class RegionLayout:
    """Replication map between composite and region unknowns.

    Parameters
    ----------
    n_composite : int
    regions : sequence of RegionDesc
        Region ``k`` must carry ``region_id == k``.
    region_to_composite : sequence of int arrays
        Local index -> composite id, one array per region.
    coords : (n_composite, dim) int array, optional
        Grid coordinates of composite nodes.
    axes : list, optional
        Per region, a tuple of per-axis grid coordinates spanned by the region
        (interface geometry for aggregation); ``None`` entries are allowed.
    parent : int array, optional
        For coarse layouts, the fine composite id of each coarse node.
    """

    def __init__(self, n_composite, regions, region_to_composite, coords=None, axes=None,
                 parent=None):
        self.n_composite = int(n_composite)
        self.regions = tuple(regions)
        for k, desc in enumerate(self.regions):
            if desc.region_id != k:
                raise LayoutError("regions must be listed with ids 0..m-1 in order")
        sizes = [len(r) for r in region_to_composite]
        for desc, size in zip(self.regions, sizes):
            if desc.size != size:
                raise LayoutError(f"region {desc.region_id}: {size} nodes but size {desc.size}")
        if len(sizes) != len(self.regions):
            raise LayoutError("one composite-id table per region required")
        self.offsets = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=self.offsets[1:])
        self.slot_comp = (np.concatenate([np.asarray(r, dtype=np.int64) for r in region_to_composite])
                          if sizes else np.zeros(0, dtype=np.int64))
        if self.slot_comp.size and (self.slot_comp.min() < 0 or self.slot_comp.max() >= self.n_composite):
            raise LayoutError("composite id out of range")
        self.slot_region = np.repeat(np.arange(len(sizes)), sizes)
        for k in range(len(sizes)):
            ids = self.region_to_composite_ids(k)
            if np.unique(ids).size != ids.size:
                raise LayoutError(f"region {k} lists a composite id twice")

        self.q = np.bincount(self.slot_comp, minlength=self.n_composite)
        if np.any(self.q == 0):
            raise LayoutError(f"composite node {int(np.flatnonzero(self.q == 0)[0])} "
                              "belongs to no region")
        self.slot_q = self.q[self.slot_comp]
        # composite -> (region, slot) in ascending region order
        order = np.argsort(self.slot_comp, kind="stable")
        self.mem_ptr = np.zeros(self.n_composite + 1, dtype=np.int64)
        np.cumsum(self.q, out=self.mem_ptr[1:])
        self.mem_slot = order
        self.mem_region = self.slot_region[order]
        # interface slots, grouped by region (ascending)
        self.iface_slots = np.flatnonzero(self.slot_q > 1)
        first = np.zeros(self.n_slots, dtype=bool)
        first[self.mem_slot[self.mem_ptr[:-1]]] = True
        self.first_slot = first
        s = self.iface_slots
        self._iface_by_region = [s[self.slot_region[s] == k] for k in range(len(sizes))]
        rest = s[~first[s]]
        self._rest_by_region = [rest[self.slot_region[rest] == k] for k in range(len(sizes))]

        self.coords = None if coords is None else np.asarray(coords)
        self.axes = axes
        self.parent = parent

    # -- sizes and lookups --------------------------------------------------

    @property
    def n_regions(self):
        return len(self.regions)

    @property
    def n_slots(self):
        return int(self.slot_comp.size)

    n_region_dofs = n_slots

    def region_slice(self, k):
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def region_to_composite_ids(self, k):
        return self.slot_comp[self.region_slice(k)]

    @property
    def region_to_composite(self):
        return [self.region_to_composite_ids(k) for k in range(self.n_regions)]

    @property
    def regions_per_node(self):
        return [self.mem_region[self.mem_ptr[i]:self.mem_ptr[i + 1]].tolist()
                for i in range(self.n_composite)]

    @property
    def composite_to_region(self):
        local = self.mem_slot - self.offsets[self.mem_region]
        return [list(zip(self.mem_region[lo:hi].tolist(), local[lo:hi].tolist()))
                for lo, hi in zip(self.mem_ptr[:-1], self.mem_ptr[1:])]

    def composite_to_local(self, k):
        """Dense map composite id -> local index in region ``k`` (``-1`` outside)."""
        out = np.full(self.n_composite, -1, dtype=np.int64)
        ids = self.region_to_composite_ids(k)
        out[ids] = np.arange(ids.size)
        return out

    def membership_masks(self):
        """``(n_composite, ceil(m/64))`` uint64 bitmasks of region membership."""
        words = max(1, (self.n_regions + 63) // 64)
        masks = np.zeros((self.n_composite, words), dtype=np.uint64)
        for w in range(words):
            sel = (self.slot_region >= 64 * w) & (self.slot_region < 64 * (w + 1))
            bits = np.left_shift(np.uint64(1), (self.slot_region[sel] - 64 * w).astype(np.uint64))
            np.bitwise_or.at(masks[:, w], self.slot_comp[sel], bits)
        return masks

    def with_regions(self, regions, axes=None):
        return RegionLayout(self.n_composite, regions, self.region_to_composite, self.coords,
                            self.axes if axes is None else axes, self.parent)

    def same_as(self, other):
        return self is other or (self.n_composite == other.n_composite
                                 and np.array_equal(self.offsets, other.offsets)
                                 and np.array_equal(self.slot_comp, other.slot_comp))

    def __repr__(self):
        return (f"RegionLayout(n_composite={self.n_composite}, n_slots={self.n_slots}, "
                f"regions={self.n_regions})")

    # -- flat-array kernels -------------------------------------------------

    def gather(self, v):
        """Composite array -> region array (``Psi^T v``)."""
        return v[self.slot_comp]

    def sum_to_composite(self, data):
        """``Psi [[v]]``: add co-located slots, ascending region order."""
        out = np.zeros(self.n_composite)
        for k in range(self.n_regions):
            sl = self.region_slice(k)
            out[self.slot_comp[sl]] += data[sl]
        return out

    def average_to_composite(self, data):
        """``(Psi Psi^T)^{-1} Psi [[v]]``.

        Evaluated as ``first + sum(v_s - first) / q`` so that exact copies come
        back bit-for-bit.
        """
        out = np.zeros(self.n_composite)
        out[self.slot_comp[self.first_slot]] = data[self.first_slot]
        if self.iface_slots.size:
            acc = np.zeros(self.n_composite)
            for mine in self._rest_by_region:
                ids = self.slot_comp[mine]
                acc[ids] += data[mine] - out[ids]
            out += acc / self.q
        return out

    def interface_sum_flat(self, data):
        """``Psi^T Psi [[v]]``; interior slots are passed through untouched."""
        out = data.copy()
        if self.iface_slots.size:
            s = self.iface_slots
            acc = np.zeros(self.n_composite)
            for mine in self._iface_by_region:
                acc[self.slot_comp[mine]] += data[mine]
            out[s] = acc[self.slot_comp[s]]
        return out

    def interface_scale_flat(self, data):
        return data / self.slot_q

    def make_consistent_flat(self, data):
        """Replace co-located slots by their average."""
        return self.gather(self.average_to_composite(data))

    def inconsistency(self, data):
        """Max |v_s - mean| over co-located groups (0 for consistent vectors)."""
        if not self.iface_slots.size:
            return 0.0
        avg = self.average_to_composite(data)
        s = self.iface_slots
        return float(np.max(np.abs(data[s] - avg[self.slot_comp[s]])))

    def composite_norm(self, data):
        return float(np.linalg.norm(self.average_to_composite(data)))

    def composite_dot(self, x, y):
        return float(np.dot(self.average_to_composite(x), self.average_to_composite(y)))


class RegionVector:
    """Per-region dense blocks stored back to back in one float64 array."""

    __slots__ = ("layout", "data")

    def __init__(self, layout, data=None):
        self.layout = layout
        if data is None:
            data = np.zeros(layout.n_slots)
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (layout.n_slots,):
            raise LayoutError(f"region vector of length {data.shape} for {layout.n_slots} slots")
        self.data = data

    @classmethod
    def from_blocks(cls, layout, blocks):
        if len(blocks) != layout.n_regions:
            raise LayoutError("one block per region required")
        return cls(layout, np.concatenate([np.asarray(b, dtype=np.float64) for b in blocks]))

    def block(self, k):
        return self.data[self.layout.region_slice(k)]

    @property
    def blocks(self):
        return [self.block(k) for k in range(self.layout.n_regions)]

    def copy(self):
        return RegionVector(self.layout, self.data.copy())

    def _other(self, other):
        if isinstance(other, RegionVector):
            _check(self.layout, other)
            return other.data
        return other

    def __add__(self, other):
        return RegionVector(self.layout, self.data + self._other(other))

    def __sub__(self, other):
        return RegionVector(self.layout, self.data - self._other(other))

    def __mul__(self, alpha):
        return RegionVector(self.layout, self.data * alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return RegionVector(self.layout, -self.data)

    def __len__(self):
        return self.data.size

    def __repr__(self):
        return f"RegionVector({[b.tolist() for b in self.blocks]})"


def _check(layout, rv):
    if not isinstance(rv, RegionVector):
        raise LayoutError("expected a RegionVector")
    if not layout.same_as(rv.layout):
        raise LayoutError("region vector belongs to a different layout")


def build_layout(membership, region_descs, coords=None, axes=None):
    """Build a layout from per-node region lists.

    ``membership[i]`` lists the regions containing composite node ``i``.
    Entries may be plain region ids, in which case each region numbers its
    nodes by ascending composite id, or ``(region, local)`` pairs giving the
    local index explicitly.
    """
    descs = sorted(region_descs, key=lambda d: d.region_id)
    m = len(descs)
    if [d.region_id for d in descs] != list(range(m)):
        raise LayoutError("region ids must be 0..m-1")
    tables = [[] for _ in range(m)]
    explicit = None
    for i, regs in enumerate(membership):
        if len(regs) == 0:
            raise LayoutError(f"composite node {i} belongs to no region")
        for entry in regs:
            is_pair = isinstance(entry, (tuple, list))
            if explicit is None:
                explicit = is_pair
            elif explicit != is_pair:
                raise LayoutError("mix of plain and (region, local) membership entries")
            r, loc = (entry if is_pair else (entry, None))
            if not 0 <= r < m:
                raise LayoutError(f"composite node {i}: unknown region {r}")
            tables[r].append((loc, i))
    r2c = []
    for k, rows in enumerate(tables):
        if explicit:
            rows.sort()
            locs = [loc for loc, _ in rows]
            if locs != list(range(len(rows))):
                raise LayoutError(f"region {k}: local indices must be 0..size-1")
        r2c.append(np.array([i for _, i in rows], dtype=np.int64))
    for desc, ids in zip(descs, r2c):
        if desc.size != ids.size:
            raise LayoutError(f"region {desc.region_id} claims {desc.size} nodes, "
                              f"membership gives {ids.size}")
    return RegionLayout(len(membership), descs, r2c, coords=coords, axes=axes)


def to_region(layout, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (layout.n_composite,):
        raise LayoutError(f"composite vector of length {v.shape} for {layout.n_composite} nodes")
    return RegionVector(layout, layout.gather(v))


def to_composite(layout, rv, mode="average"):
    _check(layout, rv)
    if mode == "sum":
        return layout.sum_to_composite(rv.data)
    if mode == "average":
        return layout.average_to_composite(rv.data)
    raise ValueError(f"unknown mode {mode!r}")


def interface_sum(layout, rv):
    _check(layout, rv)
    return RegionVector(layout, layout.interface_sum_flat(rv.data))


def interface_scale(layout, rv):
    _check(layout, rv)
    return RegionVector(layout, layout.interface_scale_flat(rv.data))


def make_consistent(layout, rv):
    _check(layout, rv)
    return RegionVector(layout, layout.make_consistent_flat(rv.data))


def coarsen_layout(layout, coarse: Sequence[CoarsePoints], axes=None):
    """Coarse layout obtained by keeping the coarse points of every region.

    Coarse composite nodes are numbered by ascending fine composite id. Every
    fine interface node must be picked by all or none of the regions sharing
    it. ``axes`` optionally supplies the coarse interface geometry.
    """
    if len(coarse) != layout.n_regions:
        raise LayoutError("one coarse point set per region required")
    picked = []
    for k, cp in enumerate(coarse):
        roots = np.asarray(cp.roots, dtype=np.int64)
        size = layout.regions[k].size
        if roots.size and (roots.min() < 0 or roots.max() >= size):
            raise LayoutError(f"region {k}: coarse point outside the region")
        picked.append(layout.region_to_composite_ids(k)[roots])
    all_ids = np.concatenate(picked) if picked else np.zeros(0, dtype=np.int64)
    count = np.bincount(all_ids, minlength=layout.n_composite)
    bad = np.flatnonzero((count > 0) & (count != layout.q))
    if bad.size:
        raise LayoutError(f"coarse points disagree across regions at composite node {int(bad[0])}")
    fine_ids = np.flatnonzero(count > 0)
    new_id = np.full(layout.n_composite, -1, dtype=np.int64)
    new_id[fine_ids] = np.arange(fine_ids.size)
    descs = []
    for k, cp in enumerate(coarse):
        if cp.axes is not None and layout.regions[k].is_structured:
            descs.append(RegionDesc.structured(k, cp.dims))
        else:
            descs.append(RegionDesc.unstructured(k, cp.size))
    coords = None if layout.coords is None else layout.coords[fine_ids]
    parent = fine_ids if layout.parent is None else layout.parent[fine_ids]
    return RegionLayout(fine_ids.size, descs, [new_id[p] for p in picked], coords=coords,
                        axes=axes, parent=parent)


# ---------------------------------------------------------------------------
# Layout file format


def write_layout(path, layout):
    with open(path, "w") as fh:
        fh.write(f"regions {layout.n_regions}\n")
        for d in layout.regions:
            if d.is_structured:
                fh.write(f"region {d.region_id} structured {' '.join(map(str, d.dims))}\n")
            else:
                fh.write(f"region {d.region_id} unstructured {d.size}\n")
        for i, pairs in enumerate(layout.composite_to_region):
            fh.write(f"node {i} : " + " ".join(f"{r} {loc}" for r, loc in pairs) + "\n")


def read_layout(path):
    descs = {}
    nodes = {}
    n_regions = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            tok = raw.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "regions":
                    n_regions = int(tok[1])
                elif tok[0] == "region":
                    rid = int(tok[1])
                    if tok[2] == "structured":
                        descs[rid] = RegionDesc.structured(rid, [int(t) for t in tok[3:]])
                    elif tok[2] == "unstructured":
                        descs[rid] = RegionDesc.unstructured(rid, int(tok[3]))
                    else:
                        raise LayoutError(f"unknown region kind {tok[2]!r}")
                elif tok[0] == "node":
                    if tok[2] != ":" or (len(tok) - 3) % 2:
                        raise LayoutError("malformed node line")
                    vals = [int(t) for t in tok[3:]]
                    nodes[int(tok[1])] = list(zip(vals[0::2], vals[1::2]))
                else:
                    raise LayoutError(f"unknown record {tok[0]!r}")
            except (IndexError, ValueError) as exc:
                raise LayoutError(f"{path}:{lineno}: {exc}") from exc
    if n_regions is None or len(descs) != n_regions:
        raise LayoutError(f"{path}: header announces {n_regions} regions, found {len(descs)}")
    if sorted(nodes) != list(range(len(nodes))):
        raise LayoutError(f"{path}: node ids must be 0..n-1")
    membership = [nodes[i] for i in range(len(nodes))]
    return build_layout(membership, list(descs.values()))


__all__ = [
    "LayoutError", "RegionDesc", "CoarsePoints", "RegionLayout", "RegionVector",
    "build_layout", "to_region", "to_composite", "interface_sum", "interface_scale",
    "make_consistent", "coarsen_layout", "write_layout", "read_layout",
]
