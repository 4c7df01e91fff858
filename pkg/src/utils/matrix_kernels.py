"""
Dense linear algebra kernels for small symmetric positive definite matrices.

Matrices here are (l+1) x (l+1) with l small, so everything is plain
numpy/scipy dense math. The Cholesky factor derivative follows the
forward-mode rule dP = P * Phi(P^-1 dSigma P^-T), Phi taking the strict
lower triangle plus half the diagonal.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from src.utils.errors import NotPositiveDefinite

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class CholeskyFactor:
    """
    Lower triangular factor P with positive diagonal such that P P^T = Sigma.

    Attributes:
        matrix (np.ndarray): The lower triangular factor
    """

    matrix: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]


def _as_square(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    return a


def symmetrize(a):
    """Return (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def cholesky(sigma):
    """
    Factor a symmetric positive definite matrix.

    The input is symmetrized before factorization; an asymmetry larger than
    SYMMETRY_TOL (relative) is rejected.

    Args:
        sigma (array-like): Symmetric positive definite matrix

    Returns:
        CholeskyFactor: Lower triangular factor

    Raises:
        ValueError: If sigma is not square or clearly asymmetric
        NotPositiveDefinite: If a pivot is not strictly positive
    """
    sigma = _as_square(sigma, "sigma")
    scale = max(1.0, float(np.max(np.abs(sigma)))) if sigma.size else 1.0
    if np.max(np.abs(sigma - sigma.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("sigma is not symmetric")
    if not np.all(np.isfinite(sigma)):
        raise NotPositiveDefinite(0, "Matrix has non-finite entries")
    a = symmetrize(sigma)

    n = a.shape[0]
    p = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - np.dot(p[j, :j], p[j, :j])
        if not pivot > 0.0:
            raise NotPositiveDefinite(j)
        p[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            p[j + 1:, j] = (a[j + 1:, j] - p[j + 1:, :j] @ p[j, :j]) / p[j, j]
    return CholeskyFactor(p)


def solve_lower(factor, rhs):
    """
    Solve P x = rhs by forward substitution.

    Args:
        factor (CholeskyFactor): The factor P
        rhs (np.ndarray): Vector or matrix (rows match P)

    Returns:
        np.ndarray: Solution with the shape of rhs
    """
    return solve_triangular(factor.matrix, rhs, lower=True, check_finite=False)


def solve_upper(factor, rhs):
    """Solve P^T x = rhs by back substitution."""
    return solve_triangular(factor.matrix, rhs, lower=True, trans='T', check_finite=False)


def inverse_spd(factor):
    """
    Return Sigma^-1 = P^-T P^-1, symmetrized.

    Args:
        factor (CholeskyFactor): Factor of Sigma

    Returns:
        np.ndarray: The inverse of Sigma
    """
    p_inv = solve_lower(factor, np.eye(factor.dim))
    return symmetrize(p_inv.T @ p_inv)


def log_det(factor):
    """Return log|Sigma| = 2 * sum(log(diag(P)))."""
    return 2.0 * float(np.sum(np.log(np.diag(factor.matrix))))


def _phi(a):
    """Strict lower triangle of A plus half its diagonal."""
    out = np.tril(a, -1)
    out[np.diag_indices_from(out)] = 0.5 * np.diag(a)
    return out


def d_cholesky(factor, d_sigma):
    """
    Directional derivative of the Cholesky factor.

    Args:
        factor (CholeskyFactor): Factor P of Sigma
        d_sigma (np.ndarray): Symmetric perturbation direction dSigma

    Returns:
        np.ndarray: Lower triangular dP with dP P^T + P dP^T = dSigma

    Raises:
        ValueError: On dimension mismatch
    """
    d_sigma = _as_square(d_sigma, "d_sigma")
    if d_sigma.shape != factor.matrix.shape:
        raise ValueError(
            f"Dimension mismatch: factor {factor.matrix.shape}, d_sigma {d_sigma.shape}"
        )
    left = solve_lower(factor, symmetrize(d_sigma))
    inner = solve_lower(factor, left.T)  # P^-1 dSigma P^-T (symmetric)
    return factor.matrix @ _phi(inner)
