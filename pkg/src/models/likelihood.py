"""
Log-likelihood, score vector and observed information of the p-group
structural elliptical errors-in-variables model.

Per group k, with d_j = z_j - mu_k and u_j = d_j^T Sigma_k^-1 d_j:

    l_k = -(n_k / 2) log|Sigma_k| + sum_j log p0(u_j)

The score and the observed information are assembled from the
derivatives of mu_k, Sigma_k and Sigma_k^-1 held by GroupGeometry.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.models.dataset import Dataset
from src.models.eiv_model import (
    ModelSpec, build_mu, build_sigma, d2_mu, d2_sigma, d2_sigma_inv, d_mu,
    d_sigma, d_sigma_inv
)
from src.models.elliptical import DensityGenerator, log_p0, weight_w, weight_w_prime
from src.utils.errors import EvaluationError, NotPositiveDefinite
from src.utils.matrix_kernels import (
    cholesky, d_cholesky, inverse_spd, log_det, solve_lower, solve_upper
)


@dataclass
class LikelihoodContext:
    """
    Everything the likelihood needs besides theta.

    Attributes:
        spec (ModelSpec): Model specification
        generator (DensityGenerator): Generator of dimension l+1
        data (Dataset): Observations
    """

    spec: ModelSpec
    generator: DensityGenerator
    data: Dataset

    def __post_init__(self):
        if self.generator.dim != self.spec.l + 1:
            raise ValueError(
                f"Generator dimension {self.generator.dim} != l+1 = {self.spec.l + 1}")
        self.data.check_against(self.spec)


class GroupGeometry:
    """
    mu_k, Sigma_k, its factor and inverse, and their parameter derivatives
    at one group block. Second-order pieces and Cholesky-factor derivatives
    are computed on first access.
    """

    def __init__(self, spec, theta_k, k):
        self.spec = spec
        self.theta_k = np.asarray(theta_k, dtype=float)
        self.k = k
        self.mu = build_mu(spec, self.theta_k, k)
        self.sigma = build_sigma(spec, self.theta_k, k)
        self.factor = cholesky(self.sigma)
        self.sigma_inv = inverse_spd(self.factor)

        s = spec.s
        self.d_mu = np.array([d_mu(spec, self.theta_k, i) for i in range(s)])
        self.d_sigma = np.array([d_sigma(spec, self.theta_k, i, k) for i in range(s)])
        self.d_sigma_inv = np.array([d_sigma_inv(self.sigma_inv, a) for a in self.d_sigma])

    @property
    def s(self):
        return self.spec.s

    @cached_property
    def d2_mu(self):
        s = self.s
        return np.array([[d2_mu(self.spec, self.theta_k, i, j) for j in range(s)]
                         for i in range(s)])

    @cached_property
    def d2_sigma(self):
        s = self.s
        return np.array([[d2_sigma(self.spec, self.theta_k, i, j, self.k) for j in range(s)]
                         for i in range(s)])

    @cached_property
    def d2_sigma_inv(self):
        s = self.s
        return np.array([[d2_sigma_inv(self.sigma_inv, self.d_sigma[i], self.d_sigma[j],
                                       self.d2_sigma[i, j])
                          for j in range(s)] for i in range(s)])

    @cached_property
    def d_factor(self):
        """Derivatives P_(k)i of the Cholesky factor, shape (s, l+1, l+1)."""
        return np.array([d_cholesky(self.factor, a) for a in self.d_sigma])

    @property
    def log_det(self):
        return log_det(self.factor)

    def whiten(self, z):
        """Return P^-1 (z_j - mu) for every row of z."""
        return solve_lower(self.factor, (np.asarray(z) - self.mu).T).T

    def inv_times(self, rows):
        """Return Sigma^-1 r for every row r (as rows), via the factor."""
        return solve_upper(self.factor, solve_lower(self.factor, np.asarray(rows).T)).T


def geometry(ctx, theta):
    """
    Build the GroupGeometry of every group.

    Raises:
        EvaluationError: If some Sigma_k is not positive definite
    """
    try:
        return [GroupGeometry(ctx.spec, theta.block(k), k) for k in range(ctx.spec.p)]
    except NotPositiveDefinite as e:
        raise EvaluationError(str(e)) from e


def _h_vectors(geo, d, sinv_d):
    """h_(k)j^(i) = d^T Sigma^(k)i d - 2 mu_(k)i^T Sigma^-1 d, shape (s, n)."""
    quad = np.einsum('nd,ide,ne->in', d, geo.d_sigma_inv, d)
    return quad - 2.0 * geo.d_mu @ sinv_d.T


def _group_loglik(ctx, geo, z):
    n_k = z.shape[0]
    white = geo.whiten(z)
    u = np.sum(white * white, axis=1)
    return -0.5 * n_k * geo.log_det + float(np.sum(log_p0(ctx.generator, u)))


def _group_score(ctx, geo, z):
    n_k = z.shape[0]
    d = z - geo.mu
    sinv_d = geo.inv_times(d)
    u = np.sum(d * sinv_d, axis=1)
    w = weight_w(ctx.generator, np.maximum(u, 0.0))
    h = _h_vectors(geo, d, sinv_d)
    trace = np.einsum('ab,iba->i', geo.sigma_inv, geo.d_sigma)
    return -0.5 * n_k * trace + h @ w


def _group_info(ctx, geo, z):
    n_k = z.shape[0]
    d = z - geo.mu
    sinv_d = geo.inv_times(d)
    u = np.sum(d * sinv_d, axis=1)
    w = weight_w(ctx.generator, np.maximum(u, 0.0))
    w_prime = weight_w_prime(ctx.generator, np.maximum(u, 0.0))
    h = _h_vectors(geo, d, sinv_d)

    t = (np.einsum('iab,jba->ij', geo.d_sigma_inv, geo.d_sigma)
         + np.einsum('ab,ijba->ij', geo.sigma_inv, geo.d2_sigma))

    # observation sums of the m-vectors via W-weighted moments of d
    w_sum = float(np.sum(w))
    w_d = w @ d
    w_dd = (d * w[:, None]).T @ d
    m = (np.einsum('ijab,ba->ij', geo.d2_sigma_inv, w_dd)
         - 2.0 * np.einsum('jd,ide,e->ij', geo.d_mu, geo.d_sigma_inv, w_d)
         - 2.0 * np.einsum('id,jde,e->ij', geo.d_mu, geo.d_sigma_inv, w_d)
         - 2.0 * np.einsum('ijd,de,e->ij', geo.d2_mu, geo.sigma_inv, w_d)
         + 2.0 * w_sum * geo.d_mu @ geo.sigma_inv @ geo.d_mu.T)
    q = (h * w_prime) @ h.T

    info = 0.5 * n_k * t - q - m
    return 0.5 * (info + info.T)


def _checked(value, what):
    if not np.all(np.isfinite(value)):
        raise EvaluationError(f"Non-finite {what}")
    return value


def loglik(ctx, theta):
    """
    Log-likelihood of the full model.

    Args:
        ctx (LikelihoodContext): Model, generator and data
        theta (ParamVector): Parameters

    Returns:
        float: l(theta)

    Raises:
        EvaluationError: If some Sigma_k is not positive definite or the value
            is not finite
    """
    geos = geometry(ctx, theta)
    total = sum(_group_loglik(ctx, geo, z) for geo, z in zip(geos, ctx.data.groups))
    return float(_checked(total, "log-likelihood"))


def score(ctx, theta):
    """
    Score vector U(theta), blocks concatenated in group order.

    Returns:
        np.ndarray: Vector of length m
    """
    geos = geometry(ctx, theta)
    blocks = [_group_score(ctx, geo, z) for geo, z in zip(geos, ctx.data.groups)]
    return _checked(np.concatenate(blocks), "score")


def loglik_and_score(ctx, theta):
    """Log-likelihood and score sharing one geometry evaluation."""
    geos = geometry(ctx, theta)
    value = sum(_group_loglik(ctx, geo, z) for geo, z in zip(geos, ctx.data.groups))
    grad = np.concatenate([_group_score(ctx, geo, z) for geo, z in zip(geos, ctx.data.groups)])
    return float(_checked(value, "log-likelihood")), _checked(grad, "score")


def group_info_blocks(ctx, theta):
    """Observed information blocks J_(k), one s x s matrix per group."""
    geos = geometry(ctx, theta)
    return [_checked(_group_info(ctx, geo, z), "observed information")
            for geo, z in zip(geos, ctx.data.groups)]


def observed_info(ctx, theta):
    """
    Observed information J(theta) = -d2 l / dtheta dtheta^T.

    Returns:
        np.ndarray: Symmetric block-diagonal m x m matrix
    """
    return block_diag(group_info_blocks(ctx, theta))


def block_diag(blocks):
    """Assemble square blocks on the diagonal of a zero matrix."""
    size = sum(b.shape[0] for b in blocks)
    out = np.zeros((size, size))
    start = 0
    for b in blocks:
        stop = start + b.shape[0]
        out[start:stop, start:stop] = b
        start = stop
    return out


def info_summary(info):
    """
    Eigen-summary of an observed information matrix.

    Returns:
        dict: min/max eigenvalue, condition number and positive-definiteness flag
    """
    eig = np.linalg.eigvalsh(0.5 * (info + info.T))
    lo, hi = float(eig[0]), float(eig[-1])
    return {
        "min_eigenvalue": lo,
        "max_eigenvalue": hi,
        "condition_number": hi / lo if lo > 0 else float("inf"),
        "positive_definite": lo > 0,
    }


def group_terms(ctx, theta, k):
    """
    GroupGeometry of group k (zero-based) together with its centred data.

    Returns:
        tuple: (GroupGeometry, d) with d = z - mu_k, shape (n_k, l+1)
    """
    try:
        geo = GroupGeometry(ctx.spec, theta.block(k), k)
    except NotPositiveDefinite as e:
        raise EvaluationError(str(e)) from e
    return geo, ctx.data.groups[k] - geo.mu
