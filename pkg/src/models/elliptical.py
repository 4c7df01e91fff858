"""
Density generating functions for the elliptical laws used by the model.

An elliptical vector of dimension d with location mu and dispersion Sigma
has density |Sigma|^(-1/2) p0((z - mu)^T Sigma^-1 (z - mu)). Only the
normal and Student-t generators are shipped.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from src.utils.errors import DomainError
from src.utils.matrix_kernels import cholesky, log_det, solve_lower


class Family(Enum):
    """Supported density generator families."""

    NORMAL = "normal"
    STUDENT_T = "student_t"


@dataclass(frozen=True)
class DensityGenerator:
    """
    Dimension-tagged density generator p0.

    Attributes:
        family (Family): Normal or Student-t
        dim (int): Dimension d of the vectors the generator serves
        dof (float or None): Degrees of freedom nu (Student-t only)
    """

    family: Family
    dim: int
    dof: float = None

    def __post_init__(self):
        if not isinstance(self.dim, int) or self.dim < 1:
            raise ValueError("Generator dimension must be a positive integer")
        if self.family is Family.STUDENT_T:
            if self.dof is None or not self.dof > 0:
                raise ValueError("Student-t degrees of freedom must be positive")
        elif self.dof is not None:
            raise ValueError("Normal generator takes no degrees of freedom")

    @classmethod
    def normal(cls, dim):
        return cls(Family.NORMAL, dim)

    @classmethod
    def student_t(cls, dim, dof):
        return cls(Family.STUDENT_T, dim, float(dof))

    @classmethod
    def from_name(cls, name, dim, dof=None):
        """
        Build a generator from its configuration name.

        Args:
            name (str): 'normal' or 'student_t'
            dim (int): Dimension
            dof (float or None): Degrees of freedom for 'student_t'

        Returns:
            DensityGenerator: The generator
        """
        family = Family(name)
        if family is Family.NORMAL:
            return cls.normal(dim)
        return cls.student_t(dim, dof)

    def with_dim(self, dim):
        """Return the same family with a different dimension."""
        return DensityGenerator(self.family, dim, self.dof)


def _check_u(u):
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) or np.any(np.isnan(u)):
        raise DomainError("Density generator argument must be non-negative")
    return u


def _scalar_or_array(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


def log_p0(gen, u):
    """
    Log of the normalized density generator.

    Args:
        gen (DensityGenerator): Generator
        u (float or np.ndarray): Non-negative quadratic form(s)

    Returns:
        float or np.ndarray: log p0(u)

    Raises:
        DomainError: If any u is negative
    """
    u_arr = _check_u(u)
    d = gen.dim
    if gen.family is Family.NORMAL:
        value = -0.5 * d * math.log(2.0 * math.pi) - 0.5 * u_arr
    else:
        nu = gen.dof
        const = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu)
                 - 0.5 * d * math.log(nu * math.pi))
        value = const - 0.5 * (nu + d) * np.log1p(u_arr / nu)
    return _scalar_or_array(value, u)


def weight_w(gen, u):
    """
    W(u) = d log p0(u) / du.

    Args:
        gen (DensityGenerator): Generator
        u (float or np.ndarray): Non-negative quadratic form(s)

    Returns:
        float or np.ndarray: The weight(s)
    """
    u_arr = _check_u(u)
    if gen.family is Family.NORMAL:
        value = np.full_like(u_arr, -0.5)
    else:
        nu = gen.dof
        value = -(nu + gen.dim) / (2.0 * (nu + u_arr))
    return _scalar_or_array(value, u)


def weight_w_prime(gen, u):
    """W'(u) = dW(u) / du."""
    u_arr = _check_u(u)
    if gen.family is Family.NORMAL:
        value = np.zeros_like(u_arr)
    else:
        nu = gen.dof
        value = (nu + gen.dim) / (2.0 * (nu + u_arr) ** 2)
    return _scalar_or_array(value, u)


def sample_spherical(gen, rng, count):
    """
    Draw spherical vectors Z* with density p0(z^T z).

    Normal draws are standard normal vectors; Student-t draws are standard
    normal vectors scaled by sqrt(nu / g), g ~ chi-square(nu) obtained as
    gamma(nu / 2, scale 2).

    Args:
        gen (DensityGenerator): Generator fixing family and dimension
        rng (np.random.Generator): Random stream
        count (int): Number of draws

    Returns:
        np.ndarray: Array of shape (count, gen.dim)
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    z = rng.standard_normal((count, gen.dim))
    if gen.family is Family.STUDENT_T and count > 0:
        g = rng.gamma(0.5 * gen.dof, 2.0, size=count)
        z *= np.sqrt(gen.dof / g)[:, None]
    return z


def log_density(gen, z, mu, sigma):
    """
    Elliptical log-density of the rows of z.

    Args:
        gen (DensityGenerator): Generator with dim equal to len(mu)
        z (np.ndarray): Observations, shape (n, dim)
        mu (np.ndarray): Location vector
        sigma (np.ndarray): Dispersion matrix

    Returns:
        np.ndarray: Log-density of each row
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    assert z.shape[1] == gen.dim, "observation length must match generator dimension"
    factor = cholesky(sigma)
    white = solve_lower(factor, (z - mu).T)
    u = np.sum(white * white, axis=0)
    return -0.5 * log_det(factor) + log_p0(gen, u)
