"""Dense SPD linear algebra used by the bandit learners.

Matrices are plain ``numpy`` float64 arrays. The fast path goes through a
cached Cholesky factor; ``gauss_solve`` and ``gauss_logdet`` are slow
elimination routines kept for cross-checking the fast path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised when a matrix cannot be Cholesky-factorized even after jitter."""


def regularized(dim: int, lam: float) -> np.ndarray:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    return lam * np.eye(dim)


def rank1_add(m: np.ndarray, x: np.ndarray, weight: float = 1.0) -> np.ndarray:
    """Return ``m + weight * x x^T``; symmetric because the outer product is."""
    x = np.asarray(x, dtype=float)
    if m.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"dimension mismatch: matrix {m.shape}, vector {x.shape}")
    return m + weight * np.outer(x, x)


@dataclass(frozen=True)
class Factorization:
    lower: np.ndarray
    logdet: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def factorize(m: np.ndarray) -> Factorization:
    """Cholesky factorization with a single jitter retry."""
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        d = m.shape[0]
        jitter = 1e-10 * float(np.trace(m)) / d
        try:
            lower = np.linalg.cholesky(m + jitter * np.eye(d))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("matrix is not positive definite") from exc
    diag = np.diagonal(lower)
    if not np.all(diag > 0):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return Factorization(lower, 2.0 * float(np.sum(np.log(diag))))


def solve(f: Factorization, rhs: np.ndarray) -> np.ndarray:
    return cho_solve((f.lower, True), rhs, check_finite=False)


def mahalanobis_inv(f: Factorization, x: np.ndarray) -> float:
    """sqrt(x^T M^{-1} x) for the factorized M."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != f.dim:
        raise ValueError(f"dimension mismatch: factor {f.dim}, vector {x.shape[0]}")
    z = solve_triangular(f.lower, x, lower=True, check_finite=False)
    return float(math.sqrt(np.dot(z, z)))


def mahalanobis_inv_rows(f: Factorization, xs: np.ndarray) -> np.ndarray:
    """Row-wise ``mahalanobis_inv`` for an (n, d) block of vectors."""
    z = solve_triangular(f.lower, xs.T, lower=True, check_finite=False)
    return np.sqrt(np.einsum("ij,ij->j", z, z))


def logdet(m: np.ndarray) -> float:
    return factorize(m).logdet


def det_condition(current: np.ndarray, local: np.ndarray, alpha_c: float,
                  factor: Factorization | None = None) -> bool:
    """True iff det(current + local) > (1 + alpha_c) det(current), in log space.

    ``factor`` is an optional cached factorization of ``current``.
    """
    if not alpha_c > 0:
        raise ValueError(f"alpha_c must be > 0, got {alpha_c}")
    base = factor.logdet if factor is not None else logdet(current)
    return logdet(current + local) > math.log1p(alpha_c) + base


# -- reference path -----------------------------------------------------------

def gauss_solve(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Gaussian elimination with partial pivoting; plain Python loops."""
    n = len(m)
    a = [list(map(float, row)) + [float(v)] for row, v in zip(m, rhs)]
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        for r in range(col + 1, n):
            factor = a[r][col] / a[col][col]
            if factor:
                for c in range(col, n + 1):
                    a[r][c] -= factor * a[col][c]
    y = [0.0] * n
    for r in range(n - 1, -1, -1):
        s = a[r][n] - sum(a[r][c] * y[c] for c in range(r + 1, n))
        y[r] = s / a[r][r]
    return np.array(y)


def gauss_logdet(m: np.ndarray) -> float:
    """log|det m| by elimination; raises if a pivot is non-positive for SPD input."""
    n = len(m)
    a = [list(map(float, row)) for row in m]
    total = 0.0
    sign = 1.0
    for col in range(n):
        piv = max(range(col, n), key=lambda r: abs(a[r][col]))
        if a[piv][col] == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            sign = -sign
        p = a[col][col]
        sign *= 1.0 if p > 0 else -1.0
        total += math.log(abs(p))
        for r in range(col + 1, n):
            factor = a[r][col] / p
            if factor:
                for c in range(col, n):
                    a[r][c] -= factor * a[col][c]
    if sign < 0:
        raise NotPositiveDefiniteError("determinant is negative")
    return total
