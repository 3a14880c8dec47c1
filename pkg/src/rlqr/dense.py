"""Small dense linear-algebra kernel shared by the Riccati solver and the oracle.

Matrices are 2-D ``float64`` numpy arrays in row-major (C) order, vectors are
1-D ``float64`` arrays. Factor objects are plain frozen dataclasses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

ZERO_PIVOT_TOL = 1e-14
SYMMETRY_RTOL = 1e-12


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky met a pivot <= 0."""


class ZeroPivot(np.linalg.LinAlgError):
    """LDL^T met a pivot with magnitude below ``ZERO_PIVOT_TOL``."""

    def __init__(self, msg: str, index: int = -1):
        super().__init__(msg)
        self.index = index


class InertiaError(np.linalg.LinAlgError):
    """LDL^T pivot sign disagrees with the declared quasi-definite pattern."""

    def __init__(self, msg: str, index: int = -1):
        super().__init__(msg)
        self.index = index


@dataclass(frozen=True)
class CholeskyFactor:
    L: np.ndarray

    @property
    def dim(self) -> int:
        return self.L.shape[0]


@dataclass(frozen=True)
class QuasiDefFactor:
    L: np.ndarray  # unit lower triangular
    d: np.ndarray
    signs: np.ndarray

    @property
    def dim(self) -> int:
        return self.L.shape[0]

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.d)


def symmetrize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.T)


def _check_square(A: np.ndarray, name: str = "A") -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(1.0, float(np.abs(A).max(initial=0.0)))
    if np.abs(A - A.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{name} is not symmetric")
    return A


def chol_factor(A: np.ndarray) -> CholeskyFactor:
    """Factor a symmetric positive-definite ``A = L L^T``.

    Raises NotPositiveDefinite when a pivot is not strictly positive.
    """
    A = _check_square(A)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if A.shape[0] and np.min(np.diag(L)) <= 0.0:
        raise NotPositiveDefinite("non-positive pivot")
    return CholeskyFactor(L)


def chol_solve(f: CholeskyFactor, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b``; ``b`` may be a vector or a matrix of right-hand sides."""
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.dim:
        raise ValueError(f"rhs has {b.shape[0]} rows, factor has dimension {f.dim}")
    if f.dim == 0:
        return b.copy()
    return sla.cho_solve((f.L, True), b, check_finite=False)


def qdldl_factor(K: np.ndarray, signs) -> QuasiDefFactor:
    """Pivot-free ``K = L D L^T`` of a symmetric quasi-definite matrix.

    ``signs`` holds +1 for primal rows and -1 for dual rows; every pivot must
    carry the declared sign. Right-looking elimination, O(n^3).
    """
    K = _check_square(K, "K")
    signs = np.asarray(signs, dtype=np.float64).ravel()
    n = K.shape[0]
    if signs.shape[0] != n:
        raise ValueError(f"sign pattern has length {signs.shape[0]}, K has dimension {n}")
    if not np.all(np.abs(signs) == 1.0):
        raise ValueError("sign pattern entries must be +1 or -1")

    work = K.copy()
    L = np.eye(n)
    d = np.empty(n)
    for j in range(n):
        dj = work[j, j]
        if abs(dj) < ZERO_PIVOT_TOL:
            raise ZeroPivot(f"pivot {j} has magnitude {abs(dj):.3e}", j)
        if np.sign(dj) != signs[j]:
            raise InertiaError(f"pivot {j} = {dj:.3e} violates declared sign {signs[j]:+.0f}", j)
        d[j] = dj
        col = work[j + 1:, j] / dj
        L[j + 1:, j] = col
        work[j + 1:, j + 1:] -= np.outer(col, work[j, j + 1:])
    return QuasiDefFactor(L, d, signs)


def qdldl_solve(f: QuasiDefFactor, b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.dim:
        raise ValueError(f"rhs has {b.shape[0]} rows, factor has dimension {f.dim}")
    if f.dim == 0:
        return b.copy()
    w = sla.solve_triangular(f.L, b, lower=True, unit_diagonal=True, check_finite=False)
    w = w / (f.d if w.ndim == 1 else f.d[:, None])
    return sla.solve_triangular(f.L.T, w, lower=False, unit_diagonal=True, check_finite=False)
