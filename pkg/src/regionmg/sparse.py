"""CSR matrices, sparse products, a dense LU for the coarse solve and MatrixMarket I/O."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from . import kernels


class DimensionError(ValueError):
    """Operands have non-conformal shapes."""


class SingularMatrixError(ArithmeticError):
    """A zero (or numerically zero) pivot was met during factorisation."""

    def __init__(self, row, message=None):
        self.row = row
        super().__init__(message or f"singular pivot in row {row}")


class SparseMatrix:
    """Compressed-sparse-row matrix with sorted, duplicate-free rows.

    ``row_ptr`` is int64, ``col_idx`` int32 and ``values`` float64. Instances
    are treated as immutable; every operation returns a new matrix.
    """

    __slots__ = ("n_rows", "n_cols", "row_ptr", "col_idx", "values", "_row_ids")

    def __init__(self, n_rows, n_cols, row_ptr, col_idx, values, check=True):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        self.col_idx = np.ascontiguousarray(col_idx, dtype=np.int32)
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self._row_ids = None
        if check:
            self.check()

    # -- construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        """Build from triplets; duplicates are summed in input order."""
        n_rows, n_cols = shape
        ptr, idx, val = kernels.coo_to_csr_arrays(rows, cols, vals, n_rows, n_cols)
        return cls(n_rows, n_cols, ptr, idx, val, check=False)

    @classmethod
    def from_dense(cls, dense, keep_zeros=False):
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2:
            raise DimensionError("expected a 2-d array")
        mask = np.ones(dense.shape, dtype=bool) if keep_zeros else dense != 0
        rows, cols = np.nonzero(mask)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape)

    @classmethod
    def identity(cls, n):
        return cls(n, n, np.arange(n + 1), np.arange(n), np.ones(n), check=False)

    # -- basic properties -------------------------------------------------

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return int(self.row_ptr[-1])

    @property
    def row_ids(self):
        if self._row_ids is None:
            self._row_ids = np.repeat(np.arange(self.n_rows, dtype=np.int64),
                                      np.diff(self.row_ptr))
        return self._row_ids

    def check(self):
        """Raise ``ValueError`` unless every CSR invariant holds."""
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n_rows + 1,) or rp[0] != 0:
            raise ValueError("row_ptr must have length n_rows+1 and start at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if rp[-1] != ci.size or ci.size != self.values.size:
            raise ValueError("row_ptr[-1] must equal nnz")
        if ci.size:
            if ci.min() < 0 or ci.max() >= self.n_cols:
                raise ValueError("column index out of range")
            inc = np.diff(ci.astype(np.int64))
            row_start = np.zeros(ci.size, dtype=bool)
            row_start[rp[:-1][np.diff(rp) > 0]] = True
            if np.any(inc[~row_start[1:]] <= 0):
                raise ValueError("columns must be strictly increasing within a row")

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_ids, self.col_idx] = self.values
        return out

    def diagonal(self):
        d = np.zeros(min(self.shape))
        on = self.row_ids == self.col_idx
        d[self.row_ids[on]] = self.values[on]
        return d

    def row_sums(self):
        return np.bincount(self.row_ids, weights=self.values, minlength=self.n_rows)

    def row(self, i):
        lo, hi = self.row_ptr[i], self.row_ptr[i + 1]
        return self.col_idx[lo:hi], self.values[lo:hi]

    def with_values(self, values):
        return SparseMatrix(self.n_rows, self.n_cols, self.row_ptr, self.col_idx, values,
                            check=False)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return spgemm(self, other)
        return spmv(self, other)

    @property
    def T(self):
        return sptranspose(self)

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix):
            return NotImplemented
        return (self.shape == other.shape
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        return f"SparseMatrix({self.n_rows}x{self.n_cols}, nnz={self.nnz})"


def spmv(A, x):
    """Return ``A @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.n_cols:
        raise DimensionError(f"matvec with {A.shape} matrix and vector of length {x.shape}")
    return kernels.spmv(A.row_ptr, A.col_idx, A.values, x)


def sptranspose(A):
    order = np.argsort(A.col_idx, kind="stable")
    row_ptr = np.zeros(A.n_cols + 1, dtype=np.int64)
    np.cumsum(np.bincount(A.col_idx, minlength=A.n_cols), out=row_ptr[1:])
    return SparseMatrix(A.n_cols, A.n_rows, row_ptr, A.row_ids[order], A.values[order],
                        check=False)


def spgemm(A, B):
    """Exact sparse product; structural zeros produced by cancellation are kept."""
    if A.n_cols != B.n_rows:
        raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
    ptr, idx, val = kernels.spgemm(A.row_ptr, A.col_idx, A.values,
                                   B.row_ptr, B.col_idx, B.values, B.n_cols)
    return SparseMatrix(A.n_rows, B.n_cols, ptr, idx, val, check=False)


def triple_product(R, A, P):
    """Galerkin product ``R A P``, formed as ``R (A P)``."""
    if R.n_cols != A.n_rows or A.n_cols != P.n_rows:
        raise DimensionError(f"non-conformal triple product {R.shape} {A.shape} {P.shape}")
    return spgemm(R, spgemm(A, P))


def add(A, B, alpha=1.0, beta=1.0):
    """``alpha A + beta B`` on the union pattern."""
    if A.shape != B.shape:
        raise DimensionError(f"cannot add {A.shape} and {B.shape}")
    rows = np.concatenate([A.row_ids, B.row_ids])
    cols = np.concatenate([A.col_idx, B.col_idx])
    vals = np.concatenate([alpha * A.values, beta * B.values])
    return SparseMatrix.from_coo(rows, cols, vals, A.shape)


def stencil_pattern(dims, offsets):
    """CSR pattern of a constant stencil on a lexicographic (x fastest) grid.

    ``offsets`` are per-axis displacement tuples ordered so that the flat
    column offset increases; neighbours falling outside the grid are dropped.
    Returns ``(row_ptr, col_idx, valid)`` where ``valid`` is the
    ``(n, len(offsets))`` mask of kept entries.
    """
    dims = tuple(int(d) for d in dims)
    n = int(np.prod(dims))
    coords = np.unravel_index(np.arange(n), dims[::-1])[::-1]
    strides = np.cumprod((1,) + dims[:-1])
    valid = np.ones((n, len(offsets)), dtype=bool)
    cols = np.zeros((n, len(offsets)), dtype=np.int64)
    for k, off in enumerate(offsets):
        flat = 0
        for ax, d in enumerate(off):
            c = coords[ax] + d
            valid[:, k] &= (c >= 0) & (c < dims[ax])
            flat += d * strides[ax]
        cols[:, k] = np.arange(n) + flat
    row_ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(valid.sum(axis=1), out=row_ptr[1:])
    return row_ptr, cols[valid].astype(np.int32), valid


# ---------------------------------------------------------------------------
# Coarse direct solver


class LuFactorization:
    """Dense LU with partial pivoting (LAPACK ``getrf``)."""

    def __init__(self, A):
        dense = A.to_dense() if isinstance(A, SparseMatrix) else np.array(A, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DimensionError(f"LU needs a square matrix, got {dense.shape}")
        self.n = dense.shape[0]
        scale = np.abs(dense).max() if dense.size else 0.0
        with warnings.catch_warnings():
            # singular pivots are reported below as SingularMatrixError
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(dense, check_finite=True, overwrite_a=True)
        pivots = np.abs(np.diag(lu))
        tiny = max(self.n, 1) * np.finfo(float).eps * scale
        bad = np.flatnonzero(pivots <= tiny)
        if bad.size:
            raise SingularMatrixError(int(bad[0]))
        self.lu = lu
        self.piv = piv

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        if b.shape != (self.n,):
            raise DimensionError(f"rhs of length {b.shape} for a {self.n}x{self.n} factorization")
        return scipy.linalg.lu_solve((self.lu, self.piv), b)


def lu_factor(A):
    return LuFactorization(A)


def lu_solve(F, b):
    return F.solve(b)


# ---------------------------------------------------------------------------
# MatrixMarket


_MM_HEADER = "%%MatrixMarket matrix coordinate real general"


def write_matrix_market(path, A):
    with open(path, "w") as fh:
        fh.write(_MM_HEADER + "\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for i, j, v in zip(A.row_ids + 1, A.col_idx.astype(np.int64) + 1, A.values):
            fh.write(f"{i} {j} {float(v)!r}\n")


def read_matrix_market(path):
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) < 5 or header[0] != "%%MatrixMarket" or header[2] != "coordinate":
            raise ValueError(f"{path}: not a MatrixMarket coordinate file")
        symmetric = header[4].lower() == "symmetric"
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n_rows, n_cols, nnz = (int(t) for t in line.split())
        data = np.loadtxt(fh, ndmin=2) if nnz else np.zeros((0, 3))
    rows = data[:, 0].astype(np.int64) - 1
    cols = data[:, 1].astype(np.int64) - 1
    vals = data[:, 2]
    if symmetric:
        off = rows != cols
        rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                            np.concatenate([vals, vals[off]]))
    return SparseMatrix.from_coo(rows, cols, vals, (n_rows, n_cols))
