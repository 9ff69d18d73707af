"""Sparse LU with reuse across many right-hand sides.

The factorization itself is SuperLU (via scipy); this module adds the
bookkeeping the ensemble stepper relies on: a factorization counter, shape
checks, and zero-pivot reporting.
"""

from __future__ import annotations

import threading

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularMatrixError(RuntimeError):
    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class FactorizationCounter:
    """Counts calls to :func:`factorize`; tests use it to check matrix sharing."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def increment(self) -> None:
        with self._lock:
            self.count += 1

    def reset(self) -> None:
        with self._lock:
            self.count = 0


counter = FactorizationCounter()

_DENSE_PIVOT_SEARCH = 3000


class SparseFactorization:
    def __init__(self, lu, n: int, stamp=None):
        self._lu = lu
        self.n = n
        self.stamp = stamp

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {b.shape[0]}, expected {self.n}")
        return self._lu.solve(b)


def _locate_zero_pivot(a: sp.csr_matrix) -> int | None:
    # structural deficiency first: an empty row or column
    nnz_rows = np.diff(a.indptr)
    if np.any(nnz_rows == 0):
        return int(np.flatnonzero(nnz_rows == 0)[0])
    nnz_cols = np.bincount(a.indices[a.data != 0], minlength=a.shape[1])
    if np.any(nnz_cols == 0):
        return int(np.flatnonzero(nnz_cols == 0)[0])
    if a.shape[0] <= _DENSE_PIVOT_SEARCH:
        _, _, u = scipy.linalg.lu(a.toarray())
        d = np.abs(np.diag(u))
        tiny = np.flatnonzero(d <= 1e-14 * max(d.max(), 1.0))
        if len(tiny):
            return int(tiny[0])
    return None


def factorize(a, stamp=None) -> SparseFactorization:
    """LU-factorize a square nonsingular sparse matrix."""
    a = sp.csc_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    counter.increment()
    try:
        lu = spla.splu(a)
    except RuntimeError as exc:
        pivot = _locate_zero_pivot(a.tocsr())
        where = f" (zero pivot at index {pivot})" if pivot is not None else ""
        raise SingularMatrixError(f"matrix is singular{where}: {exc}", pivot) from exc
    return SparseFactorization(lu, a.shape[0], stamp)


def solve_many(factorization: SparseFactorization, rhs_list) -> np.ndarray:
    """Solve for every right-hand side with one factorization; returns ``(J, n)``."""
    rhs = np.asarray(rhs_list, dtype=float)
    if rhs.ndim == 1:
        rhs = rhs[None, :]
    if rhs.shape[1] != factorization.n:
        raise ValueError(f"right-hand sides have length {rhs.shape[1]}, expected {factorization.n}")
    return factorization.solve(np.ascontiguousarray(rhs.T)).T.copy()


def residual_check(a, x: np.ndarray, b: np.ndarray) -> float:
    """``|Ax - b| / |b|``, or ``|Ax|`` when ``b`` is zero."""
    r = a @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(a @ x))
