import numpy as np
import pytest
from conftest import (dense_interp_1d, dense_interp_oracle, grid_case, random_region_instance,
                      random_stencil_matrix, two_region_1d)
from hypothesis import given, settings, strategies as st

from regionmg.disassembly import REPLICATED, split_matrix, to_composite_matrix
from regionmg.layout import CoarsePoints, LayoutError, RegionDesc, build_layout
from regionmg.problems import flag_regions, gen_poisson, region_grid_layout
from regionmg.sparse import DimensionError, SparseMatrix, triple_product
from regionmg.transfers import (AggregationError, build_constant_interp, build_linear_interp,
                                build_transfers, fast_rap_2d_const, generic_rap_2d_const,
                                hybrid_aggregation, implied_composite_transfer, interp_1d,
                                max_abs_diff, nearest_coarse, region_rap, select_coarse_points,
                                structured_interp)


def test_select_coarse_points_examples():
    assert select_coarse_points(7, 3).tolist() == [0, 3, 6]
    assert select_coarse_points(8, 3).tolist() == [0, 3, 6, 7]
    assert select_coarse_points(2, 3).tolist() == [0, 1]
    assert select_coarse_points(1, 3).tolist() == [0]
    cp = select_coarse_points(RegionDesc.structured(0, (7, 4)), 3)
    assert cp.dims == (3, 2)
    with pytest.raises(ValueError):
        select_coarse_points(7, 1)
    with pytest.raises(LayoutError):
        select_coarse_points(RegionDesc.unstructured(0, 5), 3)


def test_interp_1d_linear_rows():
    P = interp_1d(7, [0, 3, 6], "linear").to_dense()
    np.testing.assert_allclose(P[1], [2 / 3, 1 / 3, 0])
    for j, c in enumerate([0, 3, 6]):
        cols, vals = interp_1d(7, [0, 3, 6], "linear").row(c)
        assert cols.tolist() == [j] and vals.tolist() == [1.0]
    # short last interval uses the real distance
    np.testing.assert_allclose(interp_1d(8, [0, 3, 6, 7], "linear").to_dense(),
                               dense_interp_1d(8, [0, 3, 6, 7], "linear"), atol=1e-15)


def test_interp_1d_constant_assignment():
    P = interp_1d(7, [0, 3, 6], "constant")
    assert np.argmax(P.to_dense(), axis=1).tolist() == [0, 0, 1, 1, 1, 2, 2]
    assert nearest_coarse(7, [0, 3, 6]).tolist() == [0, 0, 1, 1, 1, 2, 2]
    # node 1 is equidistant from 0 and 2: the lower coarse point wins
    assert nearest_coarse(3, [0, 2]).tolist() == [0, 0, 1]
    with pytest.raises(ValueError):
        interp_1d(7, [0, 3, 6], "cubic")


@pytest.mark.parametrize("kind", ["linear", "constant"])
def test_partition_of_unity_2d(kind):
    A, lay = grid_case((7, 7), (2, 2))
    P, R, coarse = build_transfers(lay, split_matrix(A, lay), kind=kind)
    assert P.form == REPLICATED
    ones = np.ones(coarse.n_slots)
    from regionmg.disassembly import blockwise_matvec
    np.testing.assert_allclose(blockwise_matvec(P, ones), 1.0, atol=1e-14)
    for B in P.blocks:
        np.testing.assert_allclose(B.row_sums(), 1.0, atol=1e-14)
        if kind == "constant":
            assert np.all(np.diff(B.row_ptr) == 1) and np.all(B.values == 1.0)
    for b, p in zip(R.blocks, P.blocks):
        assert b == p.T


@pytest.mark.parametrize("kind", ["linear", "constant"])
@pytest.mark.parametrize("dims,counts", [((7, 1), (2, 1)), ((10, 7), (3, 2)), ((9, 8), (2, 3)),
                                         ((5, 5, 5), (2, 2, 2))])
def test_implied_transfer_matches_oracle(kind, dims, counts):
    A, lay = grid_case(dims, counts, uneven=True)
    P, _, coarse = build_transfers(lay, split_matrix(A, lay), kind=kind)
    C = implied_composite_transfer(P)
    np.testing.assert_allclose(C.to_dense(), dense_interp_oracle(lay, 3, kind), atol=1e-15)
    # no interface row reaches a coarse node outside the regions holding the fine node
    for i in range(lay.n_composite):
        mine = set(lay.regions_per_node[i])
        for c in C.row(i)[0]:
            assert mine & set(coarse.regions_per_node[c])


def test_interface_coarse_mismatch_is_an_error():
    lay = build_layout([[0]] * 6 + [[0, 1]] + [[1]] * 6,
                       [RegionDesc.structured(0, (7,)), RegionDesc.structured(1, (7,))])
    with pytest.raises(LayoutError):
        build_linear_interp(lay, [CoarsePoints.from_axes([[0, 3, 5]], (7,)),
                                  CoarsePoints.from_axes([[0, 3, 6]], (7,))])


def test_linear_needs_structured():
    A, lay = grid_case((7, 7), (2, 2))
    flagged = flag_regions(lay, [0])
    with pytest.raises(LayoutError):
        build_transfers(flagged, split_matrix(A, flagged), kind="linear")


def test_hybrid_interface_roots_match_structured_selection():
    A, lay = grid_case((7, 7), (2, 2))
    flagged = flag_regions(lay, [0])
    RA = split_matrix(A, flagged)
    agg = hybrid_aggregation(flagged, 0, RA.blocks[0], 3)
    ids = flagged.region_to_composite[0]
    iface = np.flatnonzero(flagged.q[ids] > 1)
    roots = set(ids[agg.roots[np.unique(agg.agg[iface])]].tolist())
    cp = select_coarse_points(lay.regions[0], 3)
    structured = {int(ids[p]) for p in cp.roots if flagged.q[ids[p]] > 1}
    assert roots == structured
    # interface nodes only join interface aggregates, and every node is assigned
    assert agg.agg.min() >= 0 and agg.agg.size == ids.size
    interior = np.setdiff1d(np.arange(ids.size), iface)
    assert not set(agg.agg[interior]) & set(agg.agg[iface])
    assert agg.n_interface == len(structured)


def test_hybrid_single_node_region():
    lay = build_layout([[0]], [RegionDesc.unstructured(0, 1)])
    agg = hybrid_aggregation(lay, 0, SparseMatrix.identity(1), 3)
    assert agg.n_aggregates == 1 and agg.agg.tolist() == [0]


def test_hybrid_greedy_phase_on_a_line():
    lay = build_layout([[0]] * 7, [RegionDesc.unstructured(0, 7)])
    A = gen_poisson(2, (7, 1))
    agg = hybrid_aggregation(lay, 0, A, 3)
    # roots are the lowest free node; each takes its free neighbours
    assert agg.agg.tolist() == [0, 0, 1, 1, 2, 2, 3]
    assert agg.roots.tolist() == [0, 2, 4, 6]


def test_hybrid_without_geometry_fails():
    lay = build_layout([[0], [0, 1], [1]], [RegionDesc.unstructured(0, 2),
                                            RegionDesc.unstructured(1, 2)])
    with pytest.raises(AggregationError):
        hybrid_aggregation(lay, 0, SparseMatrix.identity(2), 3)


def test_hybrid_transfer_is_consistent_with_structured_neighbour():
    A, lay = grid_case((10, 10, 10), (3, 3, 3))
    flagged = flag_regions(lay, [2])
    P, _, coarse = build_transfers(flagged, split_matrix(A, flagged), kind="constant")
    implied_composite_transfer(P)
    assert coarse.n_composite < lay.n_composite


def test_region_rap_single_region_is_plain_rap():
    A, lay = grid_case((10, 7), (1, 1), "9pt")
    RA = split_matrix(A, lay)
    P, R, _ = build_transfers(lay, RA)
    Ac = region_rap(R, RA, P)
    assert Ac.blocks[0] == triple_product(R.blocks[0], A, P.blocks[0])


def test_region_rap_two_region_1d_oracle():
    lay = two_region_1d()
    A = gen_poisson(2, (5, 1))
    RA = split_matrix(A, lay)
    from regionmg.transfers import build_linear_interp as bli
    cp = CoarsePoints.from_axes([[0, 2]], (3,))
    P = bli(lay, [cp, cp])
    Ac = to_composite_matrix(region_rap(P.T, RA, P)).to_dense()
    Pd = dense_interp_1d(5, [0, 2, 4], "linear")
    np.testing.assert_allclose(Ac, Pd.T @ A.to_dense() @ Pd, atol=1e-14)


@pytest.mark.parametrize("kind", ["linear", "constant"])
def test_region_rap_3x3_regions_oracle(kind):
    A, lay = grid_case((19, 19), (3, 3), "5pt")
    RA = split_matrix(A, lay)
    P, R, _ = build_transfers(lay, RA, kind=kind)
    Ac = to_composite_matrix(region_rap(R, RA, P)).to_dense()
    Pd = dense_interp_oracle(lay, 3, kind)
    ref = Pd.T @ A.to_dense() @ Pd
    assert np.max(np.abs(Ac - ref)) <= 1e-12 * np.abs(ref).max()


def test_region_rap_rejects_mismatched_blocks():
    A, lay = grid_case((7, 7), (2, 2))
    RA = split_matrix(A, lay)
    P, R, _ = build_transfers(lay, RA)
    with pytest.raises(ValueError):
        region_rap(R, P, P)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["linear", "constant"]))
def test_galerkin_equivalence_property(seed, kind):
    rng = np.random.default_rng(seed)
    dims, stencil, lay = random_region_instance(rng)
    A = random_stencil_matrix(dims, stencil, rng)
    RA = split_matrix(A, lay)
    P, R, _ = build_transfers(lay, RA, kind=kind)
    Ac = to_composite_matrix(region_rap(R, RA, P)).to_dense()
    Pd = dense_interp_oracle(lay, 3, kind)
    ref = Pd.T @ A.to_dense() @ Pd
    assert np.max(np.abs(Ac - ref)) <= 1e-12 * max(np.abs(ref).max(), 1e-300)


def test_fast_rap_matches_generic_7x7():
    A = gen_poisson(2, (7, 7), "9pt")
    fast = fast_rap_2d_const(A, 7, 7)
    generic = generic_rap_2d_const(A, 7, 7)
    assert fast.shape == (9, 9)
    assert max_abs_diff(fast, generic) <= 1e-13
    P = structured_interp((7, 7), ([0, 3, 6], [0, 3, 6]), "constant")
    np.testing.assert_allclose(fast.to_dense(), (P.T @ (A @ P)).to_dense(), atol=1e-13)


def test_fast_rap_interior_stencil_is_constant():
    A = gen_poisson(2, (46, 46), "9pt")
    C = fast_rap_2d_const(A, 46, 46)
    nc = 16
    rows = [x + nc * y for y in range(2, nc - 2) for x in range(2, nc - 2)]
    ref = C.row(rows[0])[1]
    for r in rows[1:]:
        np.testing.assert_array_equal(C.row(r)[1], ref)


def test_fast_rap_random_values_and_degenerate_sizes(rng):
    for nx, ny in [(4, 4), (8, 5), (13, 2), (3, 10)]:
        A = random_stencil_matrix((nx, ny), "9pt", rng)
        assert max_abs_diff(fast_rap_2d_const(A, nx, ny), generic_rap_2d_const(A, nx, ny)) <= 1e-13
    # narrower 5-point stencil is padded
    A = gen_poisson(2, (8, 8), "5pt")
    assert max_abs_diff(fast_rap_2d_const(A, 8, 8), generic_rap_2d_const(A, 8, 8)) <= 1e-13


def test_fast_rap_rejects_wide_stencil():
    n = 5
    rows, cols = [], []
    for i in range(n * n):
        rows.append(i)
        cols.append(i)
        if i + 2 < n * n:
            rows.append(i)
            cols.append(i + 2)
    A = SparseMatrix.from_coo(rows, cols, np.ones(len(rows)), (n * n, n * n))
    with pytest.raises(ValueError, match="9-point"):
        fast_rap_2d_const(A, n, n)
    with pytest.raises(DimensionError):
        fast_rap_2d_const(gen_poisson(2, (4, 4), "9pt"), 5, 5)
