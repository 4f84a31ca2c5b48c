import numpy as np
import pytest

from regionmg.layout import RegionDesc, build_layout
from regionmg.problems import gen_poisson, region_grid_layout


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timing tests measure steady state."""
    from regionmg import kernels
    from regionmg.transfers import fast_rap_2d_const

    A = gen_poisson(2, (7, 7), "9pt")
    x = np.ones(A.n_rows)
    kernels.spmv(A.row_ptr, A.col_idx, A.values, x)
    kernels.spgemm(A.row_ptr, A.col_idx, A.values, A.row_ptr, A.col_idx, A.values, A.n_cols)
    kernels.gs_sweep(A.row_ptr, A.col_idx, A.values, A.diagonal(), x.copy(), x.copy(), 1.0, False)
    fast_rap_2d_const(A, 7, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def two_region_1d():
    """Nodes 0..4 in a line; region 0 = {0,1,2}, region 1 = {2,3,4}."""
    membership = [[0], [0], [0, 1], [1], [1]]
    descs = [RegionDesc.structured(0, (3,)), RegionDesc.structured(1, (3,))]
    coords = np.arange(5)[:, None]
    axes = [(np.arange(0, 3),), (np.arange(2, 5),)]
    return build_layout(membership, descs, coords=coords, axes=axes)


def laplace_1d(n, bc="dirichlet"):
    return gen_poisson(2, (n, 1), "5pt", bc)


def grid_case(dims, counts, stencil=None, bc="dirichlet", uneven=False):
    dim = len(dims)
    if dim == 1:
        dims, counts = (dims[0], 1), (counts[0], 1)
        dim = 2
    A = gen_poisson(dim, dims, stencil, bc)
    return A, region_grid_layout(dims, counts, uneven=uneven)


# ---------------------------------------------------------------------------
# Independent oracles: dense matrices built from grid coordinates only


def coarse_indices(n, rate):
    out = list(range(0, n, rate))
    if out[-1] != n - 1:
        out.append(n - 1)
    return out


def dense_interp_1d(n_fine, coarse, kind):
    """Dense ``n_fine x len(coarse)`` interpolation on integer coordinates."""
    f = np.arange(n_fine, dtype=float)
    coarse = np.asarray(coarse, dtype=float)
    P = np.zeros((n_fine, coarse.size))
    if kind == "linear" and coarse.size > 1:
        for j in range(coarse.size):
            P[:, j] = np.interp(f, coarse, np.eye(coarse.size)[j])
    else:
        # argmin returns the first minimiser, so ties go to the lower coarse point
        P[np.arange(n_fine), np.argmin(np.abs(f[:, None] - coarse[None, :]), axis=1)] = 1.0
    return P


def dense_interp_oracle(layout, rate, kind):
    """Composite interpolation from the union of every region's coarse coordinates."""
    coords = np.asarray(layout.coords)
    shape = coords.max(axis=0) + 1
    P = None
    for ax, n in enumerate(shape):
        picked = set()
        for r in range(layout.n_regions):
            axis = np.asarray(layout.axes[r][ax])
            picked.update(axis[coarse_indices(axis.size, rate)].tolist())
        P1 = dense_interp_1d(int(n), sorted(picked), kind)
        P = P1 if P is None else np.kron(P1, P)
    return P


def random_stencil_matrix(dims, stencil, rng, symmetric=False):
    """Random values on a Poisson sparsity pattern."""
    dim = len(dims)
    A = gen_poisson(dim, dims, stencil)
    vals = rng.uniform(-1.0, 1.0, A.nnz)
    B = A.with_values(vals)
    if symmetric:
        from regionmg.sparse import add
        B = add(B, B.T, 0.5, 0.5)
    return B


def dense_gs(A, u, b, omega=1.0, backward=False):
    """Textbook lexicographic Gauss-Seidel sweep on a dense matrix."""
    u = u.copy()
    order = range(len(u) - 1, -1, -1) if backward else range(len(u))
    for i in order:
        u[i] += omega * (b[i] - A[i] @ u) / A[i, i]
    return u


def dense_chebyshev(A, u, b, degree, lam, eig_ratio=20.0, boost=1.1):
    """Straight-line transcription of the Chebyshev smoother on dense arrays."""
    dinv = 1.0 / np.diag(A)
    alpha = lam / eig_ratio
    beta = boost * lam
    theta = (alpha + beta) / 2.0
    delta = 2.0 / (beta - alpha)
    rho = 1.0 / (theta * delta)
    r = b - A @ u
    d = (1.0 / theta) * delta * dinv * r
    for _k in range(degree + 1):
        u = u + d
        r = b - A @ u
        rho_old = rho
        rho = 1.0 / (2.0 * theta * delta - rho_old)
        d = rho * rho_old * d + 2.0 * rho * delta * dinv * r
    return u


def random_region_instance(rng, max_regions=3, max_nodes=40):
    """A random conformal grid-of-regions problem in 1D or 2D."""
    dim = int(rng.integers(1, 3))
    if dim == 1:
        counts = (int(rng.integers(1, max_regions + 1)), 1)
        per = [int(rng.integers(2, max_nodes + 1)) for _ in range(counts[0])]
        n = sum(per) - (counts[0] - 1)
        dims = (n, 1)
        stencil = "5pt"
    else:
        counts = [(1, 1), (2, 1), (1, 2), (3, 1), (1, 3)][int(rng.integers(0, 5))]
        side = [int(rng.integers(2, 7)) for _ in range(2)]
        dims = tuple(c * (s - 1) + 1 for c, s in zip(counts, side))
        stencil = ("5pt", "9pt")[int(rng.integers(0, 2))]
    layout = region_grid_layout(dims, counts, uneven=True)
    if max(d.size for d in layout.regions) > max_nodes:
        return random_region_instance(rng, max_regions, max_nodes)
    return dims, stencil, layout
