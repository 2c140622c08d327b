"""Dense and sparse kernels shared by the rest of the package.

Dense matrices are plain 2-D ``numpy`` arrays; sparse matrices are
``scipy.sparse.csr_array`` instances with canonical (sorted, duplicate-free)
indices.
"""
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp


class LinalgError(ValueError):
    pass


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def as_csr(a, shape=None) -> sp.csr_array:
    """Coerce ``a`` into a canonical CSR array (sorted indices, summed duplicates)."""
    out = sp.csr_array(a, shape=shape)
    out.sum_duplicates()
    out.sort_indices()
    return out


def check_csr(a: sp.csr_array) -> None:
    """Raise if ``a`` breaks the CSR invariants the kernels rely on."""
    rows, cols = a.shape
    ptr, idx = a.indptr, a.indices
    if len(ptr) != rows + 1 or ptr[0] != 0 or ptr[-1] != a.nnz:
        raise LinalgError("malformed row pointer")
    if np.any(np.diff(ptr) < 0):
        raise LinalgError("row pointer must be non-decreasing")
    if a.nnz:
        if idx.min() < 0 or idx.max() >= cols:
            raise LinalgError("column index out of range")
        # strictly increasing within each row: a non-positive step is only
        # allowed where a new row begins
        steps = np.diff(idx)
        row_starts = np.zeros(a.nnz, dtype=bool)
        row_starts[ptr[1:-1][ptr[1:-1] < a.nnz]] = True
        if np.any((steps <= 0) & ~row_starts[1:]):
            raise LinalgError("column indexes must be strictly increasing within a row")
    if not np.all(np.isfinite(a.data)):
        raise LinalgError("non-finite values in sparse matrix")


def spmm(a: sp.csr_array, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``a @ x``."""
    x = np.asarray(x)
    if x.ndim != 2 or a.shape[1] != x.shape[0]:
        raise LinalgError(
            f"dimension mismatch: {a.shape[0]}x{a.shape[1]} @ {x.shape}")
    return np.asarray(a @ x)


def thin_svd(m: np.ndarray) -> SvdResult:
    """Economy SVD, ``k = min(rows, cols)``, singular values descending."""
    m = np.asarray(m)
    if m.ndim != 2 or m.size == 0:
        raise LinalgError(f"thin_svd needs a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"thin_svd got non-finite entries in {m.shape[0]}x{m.shape[1]} matrix")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise LinalgError(
            f"SVD did not converge for {m.shape[0]}x{m.shape[1]} matrix "
            f"(frobenius norm {np.linalg.norm(m):.6g})") from exc
    return SvdResult(u, s, vt)


def pinv(m: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the thin SVD.

    Singular values at or below ``rcond * sigma_max`` are treated as zero,
    so a rank-deficient input gets the pseudo-inverse of its truncated form.
    An all-zero input returns the zero matrix of transposed shape.
    """
    if not 0.0 < rcond < 1.0:
        raise LinalgError(f"rcond must lie in (0, 1), got {rcond}")
    m = np.asarray(m)
    if not np.any(m):
        return np.zeros((m.shape[1], m.shape[0]), dtype=m.dtype)
    u, s, vt = thin_svd(m)
    keep = s > rcond * s[0]
    inv_s = np.zeros_like(s)
    inv_s[keep] = 1.0 / s[keep]
    return (vt.T * inv_s) @ u.T


def row_topk(values, k: int) -> np.ndarray:
    """Indexes of the ``k`` largest entries by signed value.

    Ties go to the lower index; the result is sorted by rank (largest first).
    """
    values = np.asarray(values)
    if k < 1:
        raise LinalgError("k must be at least 1")
    order = np.argsort(-values, kind="stable")
    return order[:k]


def rows_topk(values: np.ndarray, k: int) -> np.ndarray:
    """Row-wise :func:`row_topk` for a 2-D array; returns an ``(rows, min(k, cols))`` index array."""
    values = np.asarray(values)
    if k < 1:
        raise LinalgError("k must be at least 1")
    return np.argsort(-values, axis=1, kind="stable")[:, :k]
