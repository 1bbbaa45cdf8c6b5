"""Dense operator construction, rank decisions and nullspace bases.

All matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Images
are flattened column-major: pixel ``(i, j)`` of an ``rows x cols`` image lives
at index ``j * rows + i``.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg

DEFAULT_RANK_TOL = 1e-10


class InvalidDimensionError(ValueError):
    """Raised when an operator is requested with unusable dimensions."""


def as_matrix(A, name: str = "matrix") -> np.ndarray:
    """Validate ``A`` as a finite 2-D float array and return it."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def diff_operator_1d(n: int) -> np.ndarray:
    """Forward difference matrix of shape ``(n - 1, n)``.

    Row ``i`` computes ``x[i + 1] - x[i]``.
    """
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"diff_operator_1d needs n >= 2, got {n}")
    n = int(n)
    D = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    D[idx, idx] = -1.0
    D[idx, idx + 1] = 1.0
    return D


def gradient_operator_2d(img_rows: int, img_cols: int) -> np.ndarray:
    """Anisotropic discrete gradient of a column-major ``img_rows x img_cols`` image.

    The first ``cols * (rows - 1)`` rows difference along image columns
    (``I_cols kron d_rows``), the remaining ``rows * (cols - 1)`` rows difference
    along image rows (``d_cols kron I_rows``).
    """
    if img_rows < 2 or img_cols < 2:
        raise InvalidDimensionError(
            f"gradient_operator_2d needs both sides >= 2, got ({img_rows}, {img_cols})"
        )
    r, c = int(img_rows), int(img_cols)
    return np.vstack([
        np.kron(np.eye(c), diff_operator_1d(r)),
        np.kron(diff_operator_1d(c), np.eye(r)),
    ])


def nullspace_basis(A, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ``{x : A x = 0}`` as the columns of an ``n x d`` array.

    Singular values below ``tol * max(1, sigma_max)`` are treated as zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = as_matrix(A)
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    thresh = tol * max(1.0, s[0] if s.size else 0.0)
    rank = int(np.sum(s > thresh))
    return Vt[rank:].T.copy()


def numerical_rank(A, tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank from a column-pivoted QR factorization.

    A pivot is counted when its residual norm exceeds ``tol`` times the largest
    original column norm.
    """
    A = as_matrix(A)
    if A.size == 0:
        return 0
    col_norm = np.linalg.norm(A, axis=0).max()
    if col_norm == 0.0:
        return 0
    R = scipy.linalg.qr(A, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    return int(np.sum(diag > tol * col_norm))


def stacked_full_column_rank(blocks: Sequence, tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff the vertical stack of ``blocks`` has full column rank."""
    if len(blocks) == 0:
        raise ValueError("stacked_full_column_rank needs at least one block")
    mats = [as_matrix(b, "block") if np.size(b) else np.zeros((0, np.shape(b)[-1]))
            for b in blocks]
    ncols = {m.shape[1] for m in mats}
    if len(ncols) != 1:
        raise ValueError(f"blocks disagree on column count: {sorted(ncols)}")
    n = ncols.pop()
    stack = np.vstack(mats)
    if stack.shape[0] < n:
        return False
    return numerical_rank(stack, tol) == n


def read_matrix_csv(path) -> np.ndarray:
    """Read the repo CSV matrix format: a ``rows,cols`` header then one row per line."""
    with open(path) as fh:
        header = fh.readline().strip()
        try:
            rows, cols = (int(v) for v in header.split(","))
        except ValueError as exc:
            raise ValueError(f"{path}: bad header {header!r}, expected 'rows,cols'") from exc
        data = [line for line in fh if line.strip()]
    if len(data) != rows:
        raise ValueError(f"{path}: header says {rows} rows, found {len(data)}")
    if rows == 0:
        return np.zeros((0, cols))
    M = np.array([[float(v) for v in line.split(",")] for line in data])
    if M.shape != (rows, cols):
        raise ValueError(f"{path}: expected shape {(rows, cols)}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{path}: non-finite entries")
    return M


def write_matrix_csv(path, M) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    with open(path, "w") as fh:
        fh.write(f"{M.shape[0]},{M.shape[1]}\n")
        for row in M:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
