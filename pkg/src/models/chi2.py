"""
Chi-square distribution functions through the regularized incomplete gamma.
"""

import math

from scipy.optimize import brentq
from scipy.special import gammainc, gammaincc

from src.utils.errors import DomainError

QUANTILE_TOL = 1e-14


def _check_dof(q):
    if not q > 0:
        raise DomainError(f"Degrees of freedom must be positive, got {q}")


def chi2_cdf(x, q):
    """
    P(X <= x) for X ~ chi-square(q), i.e. P(q/2, x/2).

    Args:
        x (float): Non-negative value (inf allowed)
        q (int): Degrees of freedom

    Returns:
        float: Probability in [0, 1]

    Raises:
        DomainError: If x < 0 or q <= 0
    """
    _check_dof(q)
    if math.isnan(x) or x < 0:
        raise DomainError(f"chi2_cdf needs x >= 0, got {x}")
    if math.isinf(x):
        return 1.0
    return float(gammainc(0.5 * q, 0.5 * x))


def chi2_sf(x, q):
    """Upper tail P(X > x), computed directly to keep small p-values accurate."""
    _check_dof(q)
    if math.isnan(x) or x < 0:
        raise DomainError(f"chi2_sf needs x >= 0, got {x}")
    if math.isinf(x):
        return 0.0
    return float(gammaincc(0.5 * q, 0.5 * x))


def chi2_quantile(prob, q):
    """
    Inverse of chi2_cdf by bracketed root finding.

    Args:
        prob (float): Probability in (0, 1)
        q (int): Degrees of freedom

    Returns:
        float: x with chi2_cdf(x, q) = prob

    Raises:
        DomainError: If prob is outside (0, 1)
    """
    _check_dof(q)
    if not 0.0 < prob < 1.0:
        raise DomainError(f"chi2_quantile needs 0 < prob < 1, got {prob}")

    upper = max(1.0, float(q))
    while chi2_cdf(upper, q) < prob:
        upper *= 2.0
    return brentq(lambda x: gammainc(0.5 * q, 0.5 * x) - prob, 0.0, upper,
                  xtol=QUANTILE_TOL, maxiter=500)
