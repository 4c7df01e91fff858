"""
Maximum likelihood fitting, null hypotheses and test orchestration.

Fits run BFGS in working coordinates (variances on the log scale, fixed
coordinates removed) with the analytic score, then polish the optimum with
Newton steps on the observed information. Non-converged fits are retried
from jittered starts.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, solve
from scipy.optimize import minimize

from src.models.eiv_model import Case, ParamVector, variance_mask
from src.models.likelihood import loglik, loglik_and_score, observed_info, score
from src.models.skovgaard import RhoExponent, run_test
from src.utils.errors import (
    BoundaryEstimate, EvaluationError, FitNotConverged, HypothesisError, InitializationError
)
from src.utils.logger import get_logger

logger = get_logger('inference')

VARIANCE_FLOOR = 1e-4
GRAD_TOL = 1e-6
MAX_ITERATIONS = 500
MAX_RESTARTS = 3
JITTER_SCALE = 0.2
POLISH_STEPS = 20
POLISH_TOL = 1e-11
MAX_LOG_VARIANCE = 300.0
NESTING_TOL = 1e-7


@dataclass(frozen=True)
class Hypothesis:
    """
    Null hypothesis psi = psi0 as a set of fixed coordinates.

    Attributes:
        constraints (tuple): (flat index, value) pairs
    """

    constraints: tuple

    def __post_init__(self):
        pairs = tuple((int(i), float(v)) for i, v in self.constraints)
        if not pairs:
            raise HypothesisError("A hypothesis needs at least one constraint")
        indices = [i for i, _ in pairs]
        if len(set(indices)) != len(indices):
            raise HypothesisError("Duplicate coordinate in hypothesis")
        if any(i < 0 for i in indices):
            raise HypothesisError("Coordinate indices must be non-negative")
        if not all(math.isfinite(v) for _, v in pairs):
            raise HypothesisError("Hypothesis values must be finite")
        object.__setattr__(self, 'constraints', pairs)

    @property
    def q(self):
        return len(self.constraints)

    @property
    def indices(self):
        return np.array([i for i, _ in self.constraints], dtype=int)

    @property
    def values(self):
        return np.array([v for _, v in self.constraints])

    def nuisance_mask(self, m):
        """Boolean mask of the coordinates not under test."""
        if np.any(self.indices >= m):
            raise HypothesisError(f"Coordinate index out of range 0..{m - 1}")
        mask = np.ones(m, dtype=bool)
        mask[self.indices] = False
        return mask

    def validate_for(self, spec):
        """
        Check the hypothesis against a model.

        Raises:
            HypothesisError: On out-of-range indices or non-positive variances
        """
        self.nuisance_mask(spec.m)
        variances = variance_mask(spec)
        for i, v in self.constraints:
            if variances[i] and v <= 0:
                raise HypothesisError(
                    f"domain violation: variance coordinate {i} fixed at {v}")

    def apply(self, theta):
        """Return a copy of theta with the constrained coordinates overwritten."""
        values = theta.values.copy()
        values[self.indices] = self.values
        return theta.with_values(values)

    @classmethod
    def from_text(cls, spec, text):
        """
        Parse 'name@group=value,...', e.g. 'beta1@1=0,beta1@2=0'.

        Args:
            spec (ModelSpec): Model whose coordinate names are used
            text (str): Comma-separated constraints

        Returns:
            Hypothesis: The parsed hypothesis

        Raises:
            HypothesisError: On syntax errors, unknown names or domain violations
        """
        pairs = []
        for item in (text or "").split(','):
            item = item.strip()
            if not item:
                continue
            try:
                ref, value = item.split('=')
                name, group = ref.strip().split('@')
                group = int(group)
                value = float(value)
            except ValueError:
                raise HypothesisError(f"Cannot parse constraint '{item}' (expected name@group=value)")
            try:
                index = (group - 1) * spec.s + spec.index(name.strip())
            except KeyError:
                raise HypothesisError(
                    f"Unknown coordinate '{name.strip()}' for case '{spec.case.value}'")
            if not 1 <= group <= spec.p:
                raise HypothesisError(f"Group {group} out of range 1..{spec.p}")
            pairs.append((index, value))
        hypothesis = cls(tuple(pairs))
        hypothesis.validate_for(spec)
        return hypothesis

    @classmethod
    def slopes(cls, spec, q, value):
        """First slope of groups 1..q fixed at value."""
        if not 1 <= q <= spec.p:
            raise HypothesisError(f"q must lie in 1..{spec.p}, got {q}")
        return cls(tuple(((k * spec.s) + spec.index('beta1'), value) for k in range(q)))

    def describe(self, spec):
        names = ParamVector(spec, np.zeros(spec.m)).names()
        return ",".join(f"{names[i]}={v!r}" for i, v in self.constraints)


@dataclass
class FitResult:
    """
    Outcome of one maximum likelihood fit.

    Attributes:
        theta (ParamVector): Estimate in natural coordinates
        loglik (float): Log-likelihood at theta
        grad_inf_norm (float): Max |score| in working coordinates
        score_inf_norm (float): Max |score| over the free natural coordinates
        iterations (int): BFGS plus Newton iterations over all attempts
        converged (bool): Whether both gradient criteria were met
        restarts_used (int): Jittered restarts performed
        boundary (bool): Stationary in working coordinates only, i.e. a
            variance was driven towards zero with a non-zero score
    """

    theta: ParamVector
    loglik: float
    grad_inf_norm: float
    iterations: int
    converged: bool
    restarts_used: int = 0
    score_inf_norm: float = 0.0
    boundary: bool = False

    def to_dict(self):
        return {
            "theta": self.theta.to_dict(),
            "loglik": self.loglik,
            "grad_inf_norm": self.grad_inf_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "restarts_used": self.restarts_used,
            "score_inf_norm": self.score_inf_norm,
            "boundary": self.boundary,
        }


def converged_gradient(grad_inf_norm, value):
    return grad_inf_norm <= GRAD_TOL * (1.0 + abs(value))


# ---------------------------------------------------------------------------
# starting values

def default_init(ctx):
    """
    Moment-based starting values, one group at a time.

    Raises:
        InitializationError: If a group has too few rows or a constant X column
    """
    spec = ctx.spec
    blocks = []
    for k, z in enumerate(ctx.data.groups):
        if z.shape[0] < 3:
            raise InitializationError(f"Group {k + 1} has fewer than 3 observations")
        y, x = z[:, :spec.l], z[:, spec.l]
        mu_x = float(np.mean(x))
        var_x = float(np.var(x, ddof=1))
        if not var_x > 0:
            raise InitializationError(f"Group {k + 1}: X has zero variance")

        if spec.case is Case.LAMBDA_X_KNOWN:
            lam = spec.lambda_x[k]
            sigma2_u = var_x / (lam + 1.0)
            sigma2_x = lam * sigma2_u
        else:
            sigma2_u = max(0.5 * var_x, VARIANCE_FLOOR)
            sigma2_x = max(var_x - sigma2_u, VARIANCE_FLOOR)

        cov = np.array([np.cov(y[:, i], x, ddof=1)[0, 1] for i in range(spec.l)])
        beta = cov / sigma2_x
        var_y = np.var(y, axis=0, ddof=1)
        sigma2_e = np.maximum(var_y - beta ** 2 * sigma2_x, VARIANCE_FLOOR)

        block = np.zeros(spec.s)
        block[spec.slope_indices()] = beta
        values = {'mu_x': mu_x, 'sigma2_x': sigma2_x, 'sigma2_u': sigma2_u,
                  'alpha': float(np.mean(np.mean(y, axis=0) - beta * mu_x))}
        values.update({f'sigma2_e{i + 1}': sigma2_e[i] for i in range(spec.l)})
        for name, value in values.items():
            if spec.has(name):
                block[spec.index(name)] = value
        blocks.append(block)
    return ParamVector.from_blocks(spec, blocks)


# ---------------------------------------------------------------------------
# fitting

class _WorkingCoordinates:
    """Map between natural coordinates and the unconstrained BFGS vector."""

    def __init__(self, base, fixed=None):
        self.base = base
        self.free = np.ones(base.spec.m, dtype=bool)
        if fixed is not None:
            self.free[fixed.indices] = False
        self.log_coords = variance_mask(base.spec)[self.free]

    @property
    def size(self):
        return int(np.sum(self.free))

    def encode(self, theta):
        w = theta.values[self.free].copy()
        w[self.log_coords] = np.log(w[self.log_coords])
        return w

    def decode(self, w):
        v = np.array(w, dtype=float)
        v[self.log_coords] = np.exp(v[self.log_coords])
        values = self.base.values.copy()
        values[self.free] = v
        return self.base.with_values(values)

    def chain(self, theta, grad):
        """Gradient in working coordinates from the natural one."""
        g = grad[self.free].copy()
        g[self.log_coords] *= theta.values[self.free][self.log_coords]
        return g


def _bfgs(ctx, work, start):
    def objective(w):
        if not np.all(np.isfinite(w)) or np.any(np.abs(w[work.log_coords]) > MAX_LOG_VARIANCE):
            return np.inf, np.zeros_like(w)
        theta = work.decode(w)
        try:
            value, grad = loglik_and_score(ctx, theta)
        except EvaluationError:
            return np.inf, np.zeros_like(w)
        return -value, -work.chain(theta, grad)

    with np.errstate(over='ignore', invalid='ignore'):
        result = minimize(objective, work.encode(start), jac=True, method='BFGS',
                          options={'maxiter': MAX_ITERATIONS, 'gtol': 1e-3 * GRAD_TOL})
    theta = work.decode(result.x)
    return theta, int(result.nit)


def _newton_polish(ctx, work, theta, value):
    """Newton steps on the free coordinates with step halving."""
    steps = 0
    block = np.ix_(work.free, work.free)
    for _ in range(POLISH_STEPS):
        grad = score(ctx, theta)[work.free]
        if np.max(np.abs(grad)) <= POLISH_TOL * (1.0 + abs(value)):
            break
        try:
            step = solve(observed_info(ctx, theta)[block], grad, assume_a='pos')
        except (LinAlgError, ValueError):
            break

        accepted = None
        t = 1.0
        while t > 1e-4:
            values = theta.values.copy()
            values[work.free] += t * step
            candidate = theta.with_values(values)
            if candidate.is_valid():
                try:
                    cand_value = loglik(ctx, candidate)
                except EvaluationError:
                    cand_value = -np.inf
                if cand_value >= value - 1e-12 * (1.0 + abs(value)):
                    accepted = candidate, cand_value
                    break
            t *= 0.5
        if accepted is None:
            break
        theta, value = accepted
        steps += 1
    return theta, value, steps


def _single_fit(ctx, work, start):
    theta, iterations = _bfgs(ctx, work, start)
    try:
        value = loglik(ctx, theta)
    except EvaluationError:
        theta, value = start, loglik(ctx, start)
    theta, value, steps = _newton_polish(ctx, work, theta, value)
    natural = score(ctx, theta)
    grad_norm = float(np.max(np.abs(work.chain(theta, natural))))
    score_norm = float(np.max(np.abs(natural[work.free])))
    # the log scale hides a non-zero score when a variance tends to zero
    stationary = converged_gradient(grad_norm, value)
    interior = converged_gradient(score_norm, value)
    return FitResult(theta, value, grad_norm, iterations + steps, stationary and interior,
                     score_inf_norm=score_norm, boundary=stationary and not interior)


def _jitter(work, theta, rng):
    values = theta.values.copy()
    values[work.free] *= np.exp(JITTER_SCALE * rng.standard_normal(work.size))
    return theta.with_values(values)


def fit_mle(ctx, init, fixed=None, seed=0):
    """
    Maximize the log-likelihood over the free coordinates.

    Args:
        ctx (LikelihoodContext): Model, generator and data
        init (ParamVector): Valid starting point
        fixed (Hypothesis or None): Coordinates held at their null values
        seed (int): Seed of the restart jitter stream

    Returns:
        FitResult: Best fit found; converged is False when every restart failed

    Raises:
        EvaluationError: If the log-likelihood cannot be evaluated at init
    """
    if fixed is not None:
        init = fixed.apply(init)
    if not init.is_valid():
        raise EvaluationError("Starting point has non-positive variances")
    work = _WorkingCoordinates(init, fixed)
    if work.size == 0:
        return FitResult(init.copy(), loglik(ctx, init), 0.0, 0, True, 0)

    logger.debug(f"Fitting {work.size} free coordinates (seed {seed})")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    best = None
    iterations = 0
    start = init
    for attempt in range(MAX_RESTARTS + 1):
        result = _single_fit(ctx, work, start)
        iterations += result.iterations
        if best is None or result.loglik > best.loglik:
            best = result
        if result.converged or result.boundary:
            best = result
            break
        logger.debug(f"Fit attempt {attempt + 1} stopped at |grad| = {result.grad_inf_norm:.3g}")
        start = _jitter(work, best.theta, rng)

    best.iterations = iterations
    best.restarts_used = attempt
    if best.boundary:
        logger.info(f"Fit stopped at the boundary (|score| = {best.score_inf_norm:.3g})")
    elif not best.converged:
        logger.info(f"Fit did not converge after {MAX_RESTARTS} restarts "
                    f"(|grad| = {best.grad_inf_norm:.3g})")
    return best


def standard_errors(ctx, fit, fixed=None):
    """
    Square roots of the diagonal of the inverse observed information on the
    free coordinates; nan for fixed coordinates or a non-invertible matrix.
    """
    m = ctx.spec.m
    free = np.ones(m, dtype=bool) if fixed is None else fixed.nuisance_mask(m)
    se = np.full(m, np.nan)
    info = observed_info(ctx, fit.theta)[np.ix_(free, free)]
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return se
    diag = np.diag(cov)
    se[free] = np.where(diag > 0, np.sqrt(np.abs(diag)), np.nan)
    return se


def _require_converged(fit, which, full=None, restricted=None):
    if fit.boundary:
        raise BoundaryEstimate(f"{which} fit stopped at the boundary "
                               f"(|score| = {fit.score_inf_norm:.3g})", full, restricted)
    if not fit.converged:
        raise FitNotConverged(f"{which} fit did not converge", full, restricted)


def test_hypothesis(ctx, hypothesis, exponent=RhoExponent.Q_HALF, seed=0):
    """
    Fit the full and the restricted model and compute LR, LR* and LR**.

    The restricted fit starts from the full estimate with the constrained
    coordinates overwritten. If it ends above the full fit, the full fit is
    repeated from the restricted estimate.

    Args:
        ctx (LikelihoodContext): Model, generator and data
        hypothesis (Hypothesis): Null hypothesis
        exponent (RhoExponent): Exponent rule for rho
        seed (int): Seed for the restart streams

    Returns:
        TestResult: Statistics with both fits attached

    Raises:
        FitNotConverged: If either fit fails to converge
        BoundaryEstimate: If either fit ends with a variance at the boundary
        HypothesisError: If the hypothesis does not fit the model
    """
    hypothesis.validate_for(ctx.spec)
    full = fit_mle(ctx, default_init(ctx), seed=seed)
    _require_converged(full, "Unrestricted", full=full)

    restricted = fit_mle(ctx, hypothesis.apply(full.theta), fixed=hypothesis, seed=seed + 1)
    _require_converged(restricted, "Restricted", full=full, restricted=restricted)

    if restricted.loglik > full.loglik + NESTING_TOL:
        logger.debug("Restricted fit above the full fit, refitting from its estimate")
        refit = fit_mle(ctx, restricted.theta, seed=seed + 2)
        if refit.converged and refit.loglik > full.loglik:
            full = refit

    return run_test(ctx, hypothesis, full, restricted, exponent)

