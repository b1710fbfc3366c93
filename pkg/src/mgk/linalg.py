"""Dense/sparse matrix primitives and a cyclic-Jacobi symmetric eigensolver.

Dense matrices are plain 2-D float64 numpy arrays. ``SparseSymMatrix`` stores
each entry of a symmetric matrix once (row <= col) as coordinate triplets;
products against dense operands never materialize the full matrix. The
eigensolver is a cyclic Jacobi sweep: deterministic, symmetric-input only,
and accurate enough (reconstruction ~1e-13 relative) to serve as the
reference path for spectral filtering. It is O(n^3) per sweep, so it is
capped at modest dimensions and meant for verification, not bulk training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericError, ShapeError

DEFAULT_EIG_DIM_CAP = 2048
SYMMETRY_TOL = 1e-10


def as_dense(values) -> np.ndarray:
    """Coerce input to a 2-D float64 array, validating finiteness."""
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D array, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise ContractError("matrix entries must be finite")
    return a


class SparseSymMatrix:
    """Symmetric matrix stored as upper-triangle coordinate triplets.

    Entries with row < col represent the pair of mirror off-diagonal values;
    diagonal entries are stored once. Triplets are kept sorted by (row, col)
    so identical matrices have identical storage, which keeps everything
    downstream deterministic.
    """

    __slots__ = ("dim", "rows", "cols", "vals")

    def __init__(self, dim, rows, cols, vals, *, require_nonnegative=False):
        dim = int(dim)
        if dim < 1:
            raise ContractError(f"dim must be >= 1, got {dim}")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=np.float64).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise ShapeError(
                f"triplet arrays disagree: rows {rows.shape}, cols {cols.shape}, "
                f"vals {vals.shape}"
            )
        if rows.size and (rows.min() < 0 or cols.min() < 0
                          or rows.max() >= dim or cols.max() >= dim):
            raise ContractError(f"triplet indices out of range for dim={dim}")
        if not np.all(np.isfinite(vals)):
            raise ContractError("matrix entries must be finite")
        if require_nonnegative and vals.size and vals.min() < 0.0:
            raise ContractError("adjacency weights must be >= 0")
        # canonicalize: row <= col, sorted lexicographically, no duplicates
        swap = rows > cols
        rows2 = np.where(swap, cols, rows)
        cols2 = np.where(swap, rows, cols)
        order = np.lexsort((cols2, rows2))
        rows2, cols2, vals = rows2[order], cols2[order], vals[order]
        if rows2.size > 1:
            dup = (rows2[1:] == rows2[:-1]) & (cols2[1:] == cols2[:-1])
            if dup.any():
                i = int(np.argmax(dup))
                raise ContractError(
                    f"duplicate entry at ({rows2[i + 1]}, {cols2[i + 1]})"
                )
        self.dim = dim
        self.rows = rows2
        self.cols = cols2
        self.vals = vals

    @classmethod
    def identity(cls, dim):
        idx = np.arange(dim)
        return cls(dim, idx, idx, np.ones(dim))

    @classmethod
    def from_dense(cls, a, tol=SYMMETRY_TOL):
        a = as_dense(a)
        n, m = a.shape
        if n != m:
            raise ShapeError(f"expected a square matrix, got {a.shape}")
        if np.max(np.abs(a - a.T), initial=0.0) > tol:
            raise ContractError(f"matrix is not symmetric within {tol}")
        sym = 0.5 * (a + a.T)
        rr, cc = np.nonzero(np.triu(sym))
        return cls(n, rr, cc, sym[rr, cc])

    @property
    def nnz(self) -> int:
        return int(self.rows.size)

    @property
    def shape(self):
        return (self.dim, self.dim)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        out[self.rows, self.cols] = self.vals
        off = self.rows != self.cols
        out[self.cols[off], self.rows[off]] = self.vals[off]
        return out

    def diagonal(self) -> np.ndarray:
        out = np.zeros(self.dim)
        on = self.rows == self.cols
        out[self.rows[on]] = self.vals[on]
        return out

    def row_sums(self) -> np.ndarray:
        out = np.zeros(self.dim)
        np.add.at(out, self.rows, self.vals)
        off = self.rows != self.cols
        np.add.at(out, self.cols[off], self.vals[off])
        return out

    def matmul(self, b: np.ndarray) -> np.ndarray:
        """self @ b for a dense vector/matrix b, in O(nnz * b.shape[1])."""
        b = np.asarray(b, dtype=np.float64)
        squeeze = b.ndim == 1
        if squeeze:
            b = b[:, None]
        if b.ndim != 2 or b.shape[0] != self.dim:
            raise ShapeError(
                f"cannot multiply {self.shape} sparse by operand of shape "
                f"{np.asarray(b).shape}"
            )
        out = np.zeros((self.dim, b.shape[1]))
        np.add.at(out, self.rows, self.vals[:, None] * b[self.cols])
        off = self.rows != self.cols
        np.add.at(out, self.cols[off], self.vals[off][:, None] * b[self.rows[off]])
        return out[:, 0] if squeeze else out

    def __repr__(self):
        return f"SparseSymMatrix(dim={self.dim}, nnz={self.nnz})"


def multiply(a, b) -> np.ndarray:
    """Matrix product supporting dense and sparse-symmetric left operands."""
    if isinstance(a, SparseSymMatrix):
        return a.matmul(b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise ShapeError(f"unsupported operand ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


@dataclass(frozen=True)
class EigenPair:
    """Eigendecomposition result: ``vectors[:, i]`` pairs with ``values[i]``."""

    vectors: np.ndarray
    values: np.ndarray


def _jacobi_rotate(a, v, p, q):
    """One two-sided Givens rotation zeroing a[p, q], accumulated into v."""
    apq = a[p, q]
    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
    if tau >= 0.0:
        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    # A <- J^T A J, column update then row update
    ap = a[:, p].copy()
    aq = a[:, q].copy()
    a[:, p] = c * ap - s * aq
    a[:, q] = s * ap + c * aq
    rp = a[p, :].copy()
    rq = a[q, :].copy()
    a[p, :] = c * rp - s * rq
    a[q, :] = s * rp + c * rq
    a[p, q] = 0.0
    a[q, p] = 0.0
    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def symmetric_eigendecomposition(s, *, dim_cap=DEFAULT_EIG_DIM_CAP,
                                 max_sweeps=60) -> EigenPair:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.

    Accepts a dense array or a SparseSymMatrix (densified internally).
    Eigenvalues are returned in ascending order; each eigenvector is signed
    so its first component of magnitude > 1e-12 is positive, making the
    decomposition fully deterministic.
    """
    if isinstance(s, SparseSymMatrix):
        a = s.to_dense()
    else:
        a = as_dense(s)
        if a.shape[0] != a.shape[1]:
            raise ShapeError(f"expected a square matrix, got {a.shape}")
        if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_TOL:
            raise ContractError(
                f"input must be symmetric within {SYMMETRY_TOL}"
            )
        a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n > dim_cap:
        raise ContractError(
            f"dimension {n} exceeds the eigensolver cap {dim_cap}"
        )
    if n == 1:
        return EigenPair(vectors=np.ones((1, 1)), values=a[0, :1].copy())

    a = a.copy()
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    tol = 1e-13 * scale
    iu, ju = np.triu_indices(n, 1)

    def off_norm():
        return float(np.sqrt(2.0 * np.sum(a[iu, ju] ** 2)))

    converged = off_norm() <= tol
    for _ in range(max_sweeps):
        if converged:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) > 1e-20 * scale:
                    _jacobi_rotate(a, v, p, q)
        converged = off_norm() <= tol
    if not converged:
        raise NumericError(
            f"Jacobi failed to converge in {max_sweeps} sweeps "
            f"(off-diagonal residual {off_norm():.3e})"
        )

    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    # sign convention: first component with |x| > 1e-12 made positive
    for j in range(n):
        col = vectors[:, j]
        big = np.nonzero(np.abs(col) > 1e-12)[0]
        lead = big[0] if big.size else int(np.argmax(np.abs(col)))
        if col[lead] < 0.0:
            vectors[:, j] = -col
    return EigenPair(vectors=vectors, values=values)
