"""Dense Cholesky helpers and the column-sparse triangular factor container.

Dense matrices are plain ``numpy`` arrays.  Sizes are only limited by memory;
callers (the CLI) enforce scenario-scale guards.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite, SingularMatrix

# Relative pivot threshold below which a factorization is treated as rank
# deficient even if numerically positive.
PIVOT_RTOL = 1e-12


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower-triangular L with L L^T = a.

    The input is symmetrized as (a + a^T)/2 first; covariance evaluators can
    carry tiny float asymmetry.  Raises NotPositiveDefinite on failure or when
    a pivot falls below PIVOT_RTOL times the largest diagonal entry.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    max_diag = float(np.max(np.diag(a)))
    if np.min(np.diag(lower)) ** 2 < PIVOT_RTOL * max_diag:
        raise NotPositiveDefinite("pivot below rank-deficiency threshold")
    return lower


def solve_triangular(l: np.ndarray, b: np.ndarray, side: str = "lower") -> np.ndarray:
    """Solve L x = b for triangular L; ``side`` is 'lower' or 'upper'."""
    l = np.asarray(l, dtype=float)
    b = np.asarray(b, dtype=float)
    if l.shape[0] != l.shape[1] or l.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"shapes {l.shape} and {b.shape} are incompatible")
    if np.any(np.diag(l) == 0.0):
        raise SingularMatrix("zero diagonal entry in triangular solve")
    return scipy.linalg.solve_triangular(l, b, lower=(side == "lower"))


def logdet_from_cholesky(l: np.ndarray) -> float:
    """2 * sum(log diag(L)) for a Cholesky factor L."""
    return 2.0 * float(np.sum(np.log(np.diag(l))))


@dataclass(frozen=True)
class SparseFactor:
    """Column-sparse upper-triangular factor U with U U^T approximating K^-1.

    ``rows[i]`` holds the sorted row indices of column i (all <= i, with i
    itself always last) and ``vals[i]`` the matching entries.  The diagonal
    entry is strictly positive in every column.
    """

    n: int
    rows: list  # list of int arrays
    vals: list  # list of float arrays

    def __post_init__(self):
        if len(self.rows) != self.n or len(self.vals) != self.n:
            raise DimensionMismatch("one row/value list required per column")
        for i, (r, v) in enumerate(zip(self.rows, self.vals)):
            if len(r) != len(v):
                raise DimensionMismatch(f"column {i}: index/value length mismatch")
            if len(r) == 0 or r[-1] != i or np.any(r[:-1] >= i) or np.any(np.diff(r) <= 0):
                raise DimensionMismatch(f"column {i}: rows must be sorted, < i, ending at i")
            if v[-1] <= 0.0:
                raise NotPositiveDefinite(f"column {i}: nonpositive diagonal entry")

    @property
    def diag(self) -> np.ndarray:
        return np.array([v[-1] for v in self.vals])

    def apply(self, x: np.ndarray, transpose: bool = False) -> np.ndarray:
        """U x, or U^T x when ``transpose``, using only stored nonzeros."""
        x = np.asarray(x, dtype=float)
        if x.shape[0] != self.n:
            raise DimensionMismatch(f"expected vector of length {self.n}, got {x.shape[0]}")
        out = np.zeros(self.n)
        if transpose:
            for i in range(self.n):
                out[i] = self.vals[i] @ x[self.rows[i]]
        else:
            for i in range(self.n):
                out[self.rows[i]] += self.vals[i] * x[i]
        return out

    def densify(self) -> np.ndarray:
        u = np.zeros((self.n, self.n))
        for i in range(self.n):
            u[self.rows[i], i] = self.vals[i]
        return u

    def to_csc(self):
        import scipy.sparse

        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r) for r in self.rows])
        indices = np.concatenate(self.rows).astype(np.int64)
        data = np.concatenate(self.vals)
        return scipy.sparse.csc_matrix((data, indices, indptr), shape=(self.n, self.n))


def sparse_factor_apply(u: SparseFactor, x: np.ndarray, transpose: bool = False) -> np.ndarray:
    return u.apply(x, transpose=transpose)
