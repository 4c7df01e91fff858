"""
Sample-space derivatives and the adjusted likelihood ratio statistics.

With the ancillary a_jk = P_hat_k^-1 (z_jk - mu_hat_k), the data are
z_jk = P_hat_k a_jk + mu_hat_k and the log-likelihood becomes a function
l(theta; theta_hat, a). The adjustment needs

    l'    = dl / dtheta_hat
    U'    = d2 l / dtheta dtheta_hat^T   (row: theta, column: theta_hat)
    J_bre = U' at theta_hat = theta = theta_tilde

which combine into the correction factor rho and the statistics
LR* = LR (1 - log(rho) / LR)^2 and LR** = LR - 2 log(rho).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.models.chi2 import chi2_sf
from src.models.elliptical import weight_w, weight_w_prime
from src.models.likelihood import (
    GroupGeometry, block_diag, geometry, observed_info, score
)
from src.utils.errors import EvaluationError, FitNotConverged, NotPositiveDefinite
from src.utils.logger import get_logger
from src.utils.matrix_kernels import solve_lower, solve_upper

logger = get_logger('skovgaard')

TINY_LR = 1e-8
NEGATIVE_LR_TOL = 1e-6


class Degeneracy(Enum):
    """Reason for falling back to the raw LR statistic."""

    NONE = "none"
    TINY_LR = "tiny_lr"
    NON_POSITIVE_RHO = "non_positive_rho"


class RhoExponent(Enum):
    """Exponent applied to U~^T J_bre^-1 U~ in rho."""

    Q_HALF = "q-half"
    P_HALF = "p-half"
    M_HALF = "m-half"

    def value_for(self, q, spec):
        if self is RhoExponent.Q_HALF:
            return 0.5 * q
        if self is RhoExponent.P_HALF:
            return 0.5 * spec.p
        return 0.5 * spec.m


@dataclass
class Ancillary:
    """
    Whitened residuals at the unrestricted estimate.

    Attributes:
        groups (list): p arrays of shape (n_k, l+1), row j = a_jk
    """

    groups: list

    def squared_norms(self):
        """a_jk^T a_jk for every observation, one array per group."""
        return [np.sum(a * a, axis=1) for a in self.groups]


@dataclass
class SampleSpaceParts:
    """
    Likelihood quantities at one theta for a fixed (theta_hat, a).

    Attributes:
        ell_prime (np.ndarray): l'(theta; theta_hat, a), length m
        u_prime (np.ndarray): U'(theta; theta_hat, a), block-diagonal m x m
        score (np.ndarray): U(theta)
        info (np.ndarray): J(theta)
        j_breve (np.ndarray or None): J_bre, only for the restricted estimate
    """

    ell_prime: np.ndarray
    u_prime: np.ndarray
    score: np.ndarray
    info: np.ndarray
    j_breve: np.ndarray = None


@dataclass
class TestResult:
    """
    Outcome of a likelihood ratio test and its two adjusted versions.

    Attributes:
        lr (float): LR = 2 (l_hat - l_tilde)
        lr_star (float): LR*
        lr_star_star (float): LR** (raw value, may be negative)
        rho (float or None): Correction factor (None when degenerate)
        q (int): Number of restrictions
        p_lr, p_star, p_star_star (float): Chi-square(q) p-values
        degenerate (Degeneracy): Fallback reason
        negative_u_prime_det (bool): det(U~') was negative
        fit_full, fit_restricted (FitResult): The two fits behind the statistic
    """

    lr: float
    lr_star: float
    lr_star_star: float
    rho: float
    q: int
    p_lr: float
    p_star: float
    p_star_star: float
    degenerate: Degeneracy = Degeneracy.NONE
    negative_u_prime_det: bool = False
    extras: dict = field(default_factory=dict)
    fit_full: object = field(default=None, repr=False, compare=False)
    fit_restricted: object = field(default=None, repr=False, compare=False)

    def to_dict(self):
        out = {
            "lr": self.lr,
            "lr_star": self.lr_star,
            "lr_star_star": self.lr_star_star,
            "rho": self.rho,
            "q": self.q,
            "p_lr": self.p_lr,
            "p_star": self.p_star,
            "p_star_star": self.p_star_star,
            "degenerate": self.degenerate.value,
            "negative_u_prime_det": self.negative_u_prime_det,
        }
        out.update(self.extras)
        return out


# ---------------------------------------------------------------------------
# ancillary statistic

def ancillary(ctx, theta_hat):
    """
    Ancillary a_jk = P_hat_k^-1 (z_jk - mu_hat_k).

    Args:
        ctx (LikelihoodContext): Model, generator and data
        theta_hat (ParamVector): Unrestricted estimate

    Returns:
        Ancillary: Whitened residuals

    Raises:
        NotPositiveDefinite: If some Sigma_hat_k cannot be factored
    """
    groups = []
    for k, z in enumerate(ctx.data.groups):
        geo = GroupGeometry(ctx.spec, theta_hat.block(k), k)
        groups.append(geo.whiten(z))
    return Ancillary(groups)


def _hat_directions(hat, a):
    """P_hat_(k)i a_j + mu_hat_(k)i, shape (s, n, l+1)."""
    return np.einsum('iab,nb->ina', hat.d_factor, a) + hat.d_mu[:, None, :]


def _group_ell_prime(ctx, hat, plain, a):
    g = a @ hat.factor.matrix.T + hat.mu - plain.mu
    sinv_g = g @ plain.sigma_inv
    u = np.maximum(np.sum(g * sinv_g, axis=1), 0.0)
    w = weight_w(ctx.generator, u)
    e = _hat_directions(hat, a)
    return 2.0 * np.einsum('ind,nd,n->i', e, sinv_g, w)


def _group_u_prime(ctx, hat, plain, a):
    g = a @ hat.factor.matrix.T + hat.mu - plain.mu
    sinv_g = g @ plain.sigma_inv
    u = np.maximum(np.sum(g * sinv_g, axis=1), 0.0)
    w = weight_w(ctx.generator, u)
    w_prime = weight_w_prime(ctx.generator, u)
    e = _hat_directions(hat, a)

    # b-terms (weighted by W)
    b = (np.einsum('n,jnd,ide,ne->ij', w, e, plain.d_sigma_inv, g)
         - np.einsum('ie,jne,n->ij', plain.d_mu @ plain.sigma_inv, e, w))
    # c-terms (weighted by W')
    h = np.einsum('nd,ide,ne->in', g, plain.d_sigma_inv, g) - 2.0 * plain.d_mu @ sinv_g.T
    proj = np.einsum('jnd,nd->jn', e, sinv_g)
    c = (h * w_prime) @ proj.T
    return 2.0 * (b + c)


def _group_j_breve(ctx, tilde, a):
    """
    J_bre block through the whitened form: with v_j = P~ a_j,
    Sigma~^-1 v_j = P~^-T a_j and v_j^T Sigma~^(i) v_j = -a_j^T P~^-1 Sigma~_i P~^-T a_j.
    """
    aa = np.sum(a * a, axis=1)
    w = weight_w(ctx.generator, aa)
    w_prime = weight_w_prime(ctx.generator, aa)

    v = a @ tilde.factor.matrix.T
    sinv_v = solve_upper(tilde.factor, a.T).T
    e = _hat_directions(tilde, a)

    # f-terms
    f = (np.einsum('n,jnd,ide,ne->ij', w, e, tilde.d_sigma_inv, v)
         - np.einsum('ie,jne,n->ij', tilde.d_mu @ tilde.sigma_inv, e, w))
    # g-terms
    whitened_d_sigma = np.array([
        solve_lower(tilde.factor, solve_lower(tilde.factor, s_i).T) for s_i in tilde.d_sigma
    ])
    quad = -np.einsum('nd,ide,ne->in', a, whitened_d_sigma, a)
    h = quad - 2.0 * tilde.d_mu @ sinv_v.T
    proj = np.einsum('jnd,nd->jn', e, sinv_v)
    g = (h * w_prime) @ proj.T
    return 2.0 * (f + g)


def sample_space_ell_prime(ctx, anc, theta_hat, theta):
    """
    l'(theta; theta_hat, a), blocks in group order.

    Args:
        ctx (LikelihoodContext): Model, generator and data
        anc (Ancillary): Ancillary built from theta_hat
        theta_hat (ParamVector): The hat argument
        theta (ParamVector): The plain argument

    Returns:
        np.ndarray: Vector of length m
    """
    hats = geometry(ctx, theta_hat)
    plains = geometry(ctx, theta)
    return np.concatenate([_group_ell_prime(ctx, h, pl, a)
                           for h, pl, a in zip(hats, plains, anc.groups)])


def sample_space_u_prime(ctx, anc, theta_hat, theta):
    """
    U'(theta; theta_hat, a) with rows indexed by theta and columns by theta_hat.

    Returns:
        np.ndarray: Block-diagonal m x m matrix
    """
    hats = geometry(ctx, theta_hat)
    plains = geometry(ctx, theta)
    return block_diag([_group_u_prime(ctx, h, pl, a)
                       for h, pl, a in zip(hats, plains, anc.groups)])


def j_breve(ctx, anc, theta_tilde):
    """
    J_bre: U' with both arguments at the restricted estimate, the ancillary
    staying the one computed at the unrestricted estimate.

    Returns:
        np.ndarray: Block-diagonal m x m matrix
    """
    tildes = geometry(ctx, theta_tilde)
    return block_diag([_group_j_breve(ctx, t, a) for t, a in zip(tildes, anc.groups)])


def hat_parts(ctx, anc, theta_hat):
    """SampleSpaceParts at theta = theta_hat."""
    return SampleSpaceParts(
        ell_prime=sample_space_ell_prime(ctx, anc, theta_hat, theta_hat),
        u_prime=sample_space_u_prime(ctx, anc, theta_hat, theta_hat),
        score=score(ctx, theta_hat),
        info=observed_info(ctx, theta_hat),
    )


def tilde_parts(ctx, anc, theta_hat, theta_tilde):
    """SampleSpaceParts at theta = theta_tilde, including J_bre."""
    return SampleSpaceParts(
        ell_prime=sample_space_ell_prime(ctx, anc, theta_hat, theta_tilde),
        u_prime=sample_space_u_prime(ctx, anc, theta_hat, theta_tilde),
        score=score(ctx, theta_tilde),
        info=observed_info(ctx, theta_tilde),
        j_breve=j_breve(ctx, anc, theta_tilde),
    )


# ---------------------------------------------------------------------------
# correction factor and adjusted statistics

def _slogdet(a):
    if a.size == 0:
        return 1.0, 0.0
    sign, logdet = np.linalg.slogdet(a)
    return float(sign), float(logdet)


@dataclass
class RhoOutcome:
    """Value of rho or the reason it could not be used."""

    rho: float = None
    degenerate: Degeneracy = Degeneracy.NONE
    negative_u_prime_det: bool = False


def rho(hat, tilde, lr, q, nuisance, exponent=None):
    """
    Correction factor rho.

    rho = |J^|^1/2 |U~'|^-1 |J~_ww|^1/2 |J_bre_ww|^-1/2 |J_bre|^1/2
          (U~^T J_bre^-1 U~)^e / [LR^(q/2-1) (l^' - l~')^T (U~')^-1 U~]

    evaluated in log space. The determinant of U~' enters in absolute value.

    Args:
        hat (SampleSpaceParts): Parts at the unrestricted estimate
        tilde (SampleSpaceParts): Parts at the restricted estimate (with j_breve)
        lr (float): Likelihood ratio statistic
        q (int): Number of restrictions
        nuisance (np.ndarray): Boolean mask of the nuisance coordinates
        exponent (float or None): e, default q/2

    Returns:
        RhoOutcome: rho or the degeneracy reason
    """
    if exponent is None:
        exponent = 0.5 * q
    if not lr > TINY_LR:
        return RhoOutcome(degenerate=Degeneracy.TINY_LR)

    bad = RhoOutcome(degenerate=Degeneracy.NON_POSITIVE_RHO)
    ww = np.ix_(nuisance, nuisance)
    u_tilde = tilde.score
    try:
        sign_j_hat, logdet_j_hat = _slogdet(hat.info)
        sign_u, logdet_u = _slogdet(tilde.u_prime)
        sign_jt_ww, logdet_jt_ww = _slogdet(tilde.info[ww])
        sign_jb_ww, logdet_jb_ww = _slogdet(tilde.j_breve[ww])
        sign_jb, logdet_jb = _slogdet(tilde.j_breve)
        if sign_u == 0 or sign_jb == 0 or sign_jb_ww == 0:
            return bad
        if sign_j_hat <= 0 or sign_jt_ww <= 0 or sign_jb * sign_jb_ww <= 0:
            return bad

        quad = float(u_tilde @ np.linalg.solve(tilde.j_breve, u_tilde))
        denom = float((hat.ell_prime - tilde.ell_prime)
                      @ np.linalg.solve(tilde.u_prime, u_tilde))
    except np.linalg.LinAlgError:
        return bad
    if not quad > 0 or not denom > 0:
        return RhoOutcome(degenerate=Degeneracy.NON_POSITIVE_RHO,
                          negative_u_prime_det=sign_u < 0)

    log_rho = (0.5 * logdet_j_hat - logdet_u + 0.5 * logdet_jt_ww
               - 0.5 * logdet_jb_ww + 0.5 * logdet_jb
               + exponent * math.log(quad)
               - (0.5 * q - 1.0) * math.log(lr) - math.log(denom))
    if not math.isfinite(log_rho) or log_rho > 700:
        return RhoOutcome(degenerate=Degeneracy.NON_POSITIVE_RHO,
                          negative_u_prime_det=sign_u < 0)
    return RhoOutcome(rho=math.exp(log_rho), negative_u_prime_det=sign_u < 0)


def adjusted_statistics(lr, rho_value):
    """
    LR* = LR (1 - log(rho) / LR)^2 and LR** = LR - 2 log(rho).

    Returns:
        tuple: (lr_star, lr_star_star); LR** is not clamped
    """
    log_rho = math.log(rho_value)
    lr_star = lr * (1.0 - log_rho / lr) ** 2
    lr_star_star = lr - 2.0 * log_rho
    return lr_star, lr_star_star


def run_test(ctx, hypothesis, fit_full, fit_restricted, exponent=RhoExponent.Q_HALF):
    """
    Assemble LR, the sample-space parts, rho and the adjusted statistics.

    Args:
        ctx (LikelihoodContext): Model, generator and data
        hypothesis (Hypothesis): Null hypothesis (q and nuisance mask)
        fit_full (FitResult): Unrestricted fit
        fit_restricted (FitResult): Fit under the null
        exponent (RhoExponent): Exponent rule for rho

    Returns:
        TestResult: Statistics, p-values and degeneracy flags

    Raises:
        FitNotConverged: If a fit did not converge or the pair is inconsistent
    """
    if not (fit_full.converged and fit_restricted.converged):
        raise FitNotConverged("Cannot test with a non-converged fit",
                              full=fit_full, restricted=fit_restricted)
    q = hypothesis.q
    lr = 2.0 * (fit_full.loglik - fit_restricted.loglik)
    if lr < -NEGATIVE_LR_TOL:
        raise FitNotConverged(
            f"Restricted fit beats the full fit (LR = {lr:.3g})",
            full=fit_full, restricted=fit_restricted)
    lr = max(lr, 0.0)

    outcome = RhoOutcome(degenerate=Degeneracy.TINY_LR)
    if lr > TINY_LR:
        try:
            anc = ancillary(ctx, fit_full.theta)
            hat = hat_parts(ctx, anc, fit_full.theta)
            tilde = tilde_parts(ctx, anc, fit_full.theta, fit_restricted.theta)
            power = RhoExponent(exponent).value_for(q, ctx.spec)
            outcome = rho(hat, tilde, lr, q, hypothesis.nuisance_mask(ctx.spec.m), power)
        except (EvaluationError, NotPositiveDefinite) as e:
            logger.warning(f"Sample-space derivatives failed: {e}")
            outcome = RhoOutcome(degenerate=Degeneracy.NON_POSITIVE_RHO)

    if outcome.degenerate is Degeneracy.NONE:
        lr_star, lr_star_star = adjusted_statistics(lr, outcome.rho)
    else:
        logger.warning(f"Adjustment degenerate ({outcome.degenerate.value}), LR = {lr:.6g}")
        lr_star = lr_star_star = lr

    return TestResult(
        lr=lr,
        lr_star=lr_star,
        lr_star_star=lr_star_star,
        rho=outcome.rho,
        q=q,
        p_lr=chi2_sf(lr, q),
        p_star=chi2_sf(max(lr_star, 0.0), q),
        p_star_star=chi2_sf(max(lr_star_star, 0.0), q),
        degenerate=outcome.degenerate,
        negative_u_prime_det=outcome.negative_u_prime_det,
        fit_full=fit_full,
        fit_restricted=fit_restricted,
    )
