"""Hot loops, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

The public names at the bottom of the module pick one flavour according to
:data:`regionmg._accel.USE_NUMBA`. All kernels take raw CSR arrays
(``row_ptr`` int64, ``col_idx`` int32, ``values`` float64).
"""
import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# y = A x


@njit
def spmv_nb(row_ptr, col_idx, values, x):
    n = row_ptr.shape[0] - 1
    y = np.empty(n, dtype=np.float64)
    for i in range(n):
        s = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s += values[p] * x[col_idx[p]]
        y[i] = s
    return y


def spmv_np(row_ptr, col_idx, values, x):
    n = row_ptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(row_ptr))
    return np.bincount(rows, weights=values * x[col_idx], minlength=n)


# ---------------------------------------------------------------------------
# C = A B (Gustavson, dense accumulator, sorted output rows)


@njit
def spgemm_nb(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_cols):
    n = a_ptr.shape[0] - 1
    marker = np.full(n_cols, -1, dtype=np.int64)
    c_ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        count = 0
        for p in range(a_ptr[i], a_ptr[i + 1]):
            k = a_idx[p]
            for q in range(b_ptr[k], b_ptr[k + 1]):
                j = b_idx[q]
                if marker[j] != i:
                    marker[j] = i
                    count += 1
        c_ptr[i + 1] = c_ptr[i] + count

    nnz = c_ptr[n]
    c_idx = np.empty(nnz, dtype=np.int32)
    c_val = np.empty(nnz, dtype=np.float64)
    acc = np.zeros(n_cols, dtype=np.float64)
    marker[:] = -1
    for i in range(n):
        start = c_ptr[i]
        length = 0
        for p in range(a_ptr[i], a_ptr[i + 1]):
            k = a_idx[p]
            a = a_val[p]
            for q in range(b_ptr[k], b_ptr[k + 1]):
                j = b_idx[q]
                if marker[j] != i:
                    marker[j] = i
                    c_idx[start + length] = j
                    length += 1
                    acc[j] = a * b_val[q]
                else:
                    acc[j] += a * b_val[q]
        c_idx[start:start + length] = np.sort(c_idx[start:start + length])
        for t in range(start, start + length):
            c_val[t] = acc[c_idx[t]]
    return c_ptr, c_idx, c_val


def coo_to_csr_arrays(rows, cols, vals, n_rows, n_cols):
    """Sort COO triplets by (row, col) and sum duplicates in input order."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=np.float64)
    key = rows * n_cols + cols
    order = np.argsort(key, kind="stable")
    key = key[order]
    vals = vals[order]
    if key.size:
        first = np.empty(key.size, dtype=bool)
        first[0] = True
        np.not_equal(key[1:], key[:-1], out=first[1:])
        starts = np.flatnonzero(first)
        ukey = key[starts]
        uval = np.add.reduceat(vals, starts)
    else:
        ukey = key
        uval = vals
    urow = ukey // n_cols
    ucol = (ukey - urow * n_cols).astype(np.int32)
    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(urow, minlength=n_rows), out=row_ptr[1:])
    return row_ptr, ucol, uval


def spgemm_np(a_ptr, a_idx, a_val, b_ptr, b_idx, b_val, n_cols):
    n = a_ptr.shape[0] - 1
    a_rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(a_ptr))
    lens = (b_ptr[1:] - b_ptr[:-1])[a_idx]
    total = int(lens.sum())
    # position of every partial product inside B's arrays
    seg_start = np.repeat(b_ptr[:-1][a_idx], lens)
    within = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(lens) - lens, lens)
    pos = seg_start + within
    rows = np.repeat(a_rows, lens)
    vals = np.repeat(a_val, lens) * b_val[pos]
    return coo_to_csr_arrays(rows, b_idx[pos], vals, n, n_cols)


# ---------------------------------------------------------------------------
# Region-local Gauss-Seidel sweep: delta_i = omega (r_i - sum_j a_ij delta_j) / d_i


@njit
def gs_sweep_nb(row_ptr, col_idx, values, diag, r, u, omega, backward):
    n = diag.shape[0]
    delta = np.zeros(n, dtype=np.float64)
    for t in range(n):
        i = n - 1 - t if backward else t
        s = r[i]
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s -= values[p] * delta[col_idx[p]]
        r[i] = s
        d = omega * s / diag[i]
        delta[i] = d
        u[i] += d


def gs_sweep_np(row_ptr, col_idx, values, diag, r, u, omega, backward):
    from scipy.sparse import csr_matrix
    from scipy.sparse.linalg import spsolve_triangular

    n = diag.shape[0]
    rows = np.repeat(np.arange(n), np.diff(row_ptr))
    keep = col_idx > rows if backward else col_idx < rows
    rr = np.concatenate([rows[keep], np.arange(n)])
    cc = np.concatenate([col_idx[keep], np.arange(n)])
    vv = np.concatenate([values[keep], diag / omega])
    T = csr_matrix((vv, (rr, cc)), shape=(n, n))
    delta = spsolve_triangular(T, r, lower=not backward)
    u += delta
    r[:] = diag * delta / omega


# ---------------------------------------------------------------------------
# Galerkin product for a full 9-point stencil on an nx x ny grid with
# piecewise-constant transfers. Value positions follow from the stencil
# pattern, so the index arrays of A are never touched.


@njit
def rap_const_2d_nb(values, nx, ny, agg_x, agg_y, ncx, ncy):
    out = np.zeros((ncx * ncy, 9), dtype=np.float64)
    pos = 0
    for y in range(ny):
        cj = agg_y[y]
        for x in range(nx):
            ci = agg_x[x]
            row = cj * ncx + ci
            for dy in range(-1, 2):
                yy = y + dy
                if yy < 0 or yy >= ny:
                    continue
                oy = (agg_y[yy] - cj + 1) * 3
                for dx in range(-1, 2):
                    xx = x + dx
                    if xx < 0 or xx >= nx:
                        continue
                    out[row, oy + agg_x[xx] - ci + 1] += values[pos]
                    pos += 1
    return out


def rap_const_2d_np(values, nx, ny, agg_x, agg_y, ncx, ncy):
    y, x = np.divmod(np.arange(nx * ny), nx)
    valid = np.empty((nx * ny, 9), dtype=bool)
    for k, (dy, dx) in enumerate((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)):
        valid[:, k] = (x + dx >= 0) & (x + dx < nx) & (y + dy >= 0) & (y + dy < ny)
    pos = np.cumsum(valid.ravel()) - 1
    target = np.empty((nx * ny, 9), dtype=np.int64)
    ci = agg_x[x]
    cj = agg_y[y]
    row = cj * ncx + ci
    for k, (dy, dx) in enumerate((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)):
        xx = np.clip(x + dx, 0, nx - 1)
        yy = np.clip(y + dy, 0, ny - 1)
        target[:, k] = row * 9 + (agg_y[yy] - cj + 1) * 3 + agg_x[xx] - ci + 1
    flat_valid = valid.ravel()
    out = np.bincount(target.ravel()[flat_valid], weights=values[pos[flat_valid]],
                      minlength=ncx * ncy * 9)
    return out.reshape(ncx * ncy, 9)


if USE_NUMBA:
    spmv = spmv_nb
    spgemm = spgemm_nb
    gs_sweep = gs_sweep_nb
    rap_const_2d = rap_const_2d_nb
else:
    spmv = spmv_np
    spgemm = spgemm_np
    gs_sweep = gs_sweep_np
    rap_const_2d = rap_const_2d_np
