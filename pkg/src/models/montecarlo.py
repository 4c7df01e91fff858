"""
Data generation from the latent representation and the null rejection-rate
study comparing LR, LR* and LR** with their chi-square critical values.
"""

import time
from dataclasses import dataclass, field
from multiprocessing import Pool

import numpy as np

from src.models import inference
from src.models.chi2 import chi2_quantile
from src.models.dataset import Dataset
from src.models.eiv_model import ModelSpec, ParamVector, latent_representation
from src.models.elliptical import DensityGenerator, sample_spherical
from src.models.inference import Hypothesis
from src.models.likelihood import LikelihoodContext
from src.models.skovgaard import Degeneracy, RhoExponent
from src.utils.errors import (
    BoundaryEstimate, ConfigError, DomainError, EvaluationError, FitNotConverged,
    InitializationError, NotPositiveDefinite
)
from src.utils.logger import get_logger

logger = get_logger('montecarlo')

DEFAULT_LEVELS = (0.01, 0.05, 0.10)
STATISTICS = ("LR", "LR*", "LR**")
ADJUSTED = ("LR*", "LR**")

STATUS_OK = "ok"
STATUS_NOT_CONVERGED = "not_converged"
STATUS_BOUNDARY = "boundary_estimate"
STATUS_INITIALIZATION = "initialization_error"
STATUS_EVALUATION = "evaluation_error"


def level_key(level):
    return f"{level:g}"


@dataclass(frozen=True)
class SimConfig:
    """
    One cell of a rejection-rate table.

    Attributes:
        spec (ModelSpec): Model, including the group sizes
        generator (DensityGenerator): Generator of dimension l+1
        theta_true (ParamVector): Generating parameters (satisfy the null)
        hypothesis (Hypothesis): Null hypothesis under test
        replications (int): Number of simulated datasets
        levels (tuple): Nominal levels
        master_seed (int): Root of every replication stream
        rho_exponent (RhoExponent): Exponent rule for rho
        label (str): Row label in sweep tables
    """

    spec: ModelSpec
    generator: DensityGenerator
    theta_true: ParamVector
    hypothesis: Hypothesis
    replications: int
    levels: tuple = DEFAULT_LEVELS
    master_seed: int = 0
    rho_exponent: RhoExponent = RhoExponent.Q_HALF
    label: str = ""

    def __post_init__(self):
        if not isinstance(self.replications, int) or self.replications < 1:
            raise ConfigError(f"replications must be a positive integer, got {self.replications}")
        levels = tuple(float(g) for g in self.levels)
        if not levels or any(not 0.0 < g < 1.0 for g in levels):
            raise ConfigError("levels must be probabilities in (0, 1)")
        object.__setattr__(self, 'levels', levels)
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit non-negative integer")
        if self.generator.dim != self.spec.l + 1:
            raise ConfigError("Generator dimension must be l+1")
        if self.theta_true.spec != self.spec or not self.theta_true.is_valid():
            raise ConfigError("theta_true does not belong to the model or has non-positive variances")
        try:
            self.hypothesis.validate_for(self.spec)
        except ValueError as e:
            raise ConfigError(str(e))
        held = self.theta_true.values[self.hypothesis.indices]
        if not np.allclose(held, self.hypothesis.values, rtol=0.0, atol=1e-12):
            raise ConfigError("theta_true does not satisfy the null hypothesis")

    @property
    def q(self):
        return self.hypothesis.q


@dataclass
class ReplicationOutcome:
    """Statistics of one replication, or the reason it failed."""

    index: int
    status: str
    lr: float = None
    lr_star: float = None
    lr_star_star: float = None
    degenerate: str = Degeneracy.NONE.value

    def statistic(self, name):
        return {"LR": self.lr, "LR*": self.lr_star, "LR**": self.lr_star_star}[name]


@dataclass
class SimReport:
    """
    Rejection rates (percent) of one table cell.

    Attributes:
        rates (dict): statistic -> level -> percent, degenerate replications
            counted with the LR fallback
        rates_exclude (dict): LR* and LR** rates with degenerate replications
            dropped from the denominator
        failures (dict): Failed replications by error type
        wall_clock (float): Seconds spent (kept out of to_dict)
    """

    label: str
    q: int
    group_sizes: tuple
    levels: tuple
    replications: int
    used: int
    degenerate: int
    rates: dict
    rates_exclude: dict
    failures: dict = field(default_factory=dict)
    wall_clock: float = 0.0

    @property
    def degenerate_fraction(self):
        return self.degenerate / self.used if self.used else 0.0

    @property
    def nonconvergence_fraction(self):
        return (self.replications - self.used) / self.replications

    def to_dict(self):
        return {
            "label": self.label,
            "q": self.q,
            "group_sizes": list(self.group_sizes),
            "levels": list(self.levels),
            "replications": self.replications,
            "used": self.used,
            "denominators": {"fallback": self.used, "exclude": self.used - self.degenerate},
            "degenerate": self.degenerate,
            "degenerate_fraction": self.degenerate_fraction,
            "nonconvergence_fraction": self.nonconvergence_fraction,
            "failures": dict(self.failures),
            "rates": self.rates,
            "rates_exclude": self.rates_exclude,
        }


# ---------------------------------------------------------------------------
# data generation

def replication_rng(master_seed, r):
    """Counter-based stream of replication r, independent of execution order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(master_seed, spawn_key=(r,))))


def generate_dataset(spec, generator, theta_true, rng):
    """
    Simulate one dataset through Z = delta + Delta b, b = eta + A s.

    Args:
        spec (ModelSpec): Model with the group sizes to draw
        generator (DensityGenerator): Generator of dimension l+1 (its l+2
            sibling drives the latent vector)
        theta_true (ParamVector): Generating parameters
        rng (np.random.Generator): Random stream

    Returns:
        Dataset: One (n_k, l+1) array per group
    """
    latent = generator.with_dim(spec.l + 2)
    groups = []
    for k, n_k in enumerate(spec.group_sizes):
        delta, delta_mat, eta, omega = latent_representation(spec, theta_true.block(k), k)
        s = sample_spherical(latent, rng, n_k)
        b = eta + s * np.sqrt(omega)
        groups.append(delta + b @ delta_mat.T)
    return Dataset(groups)


# ---------------------------------------------------------------------------
# replications

def run_replication(config, r):
    """
    Simulate and test replication r.

    Returns:
        ReplicationOutcome: Statistics or the failure status
    """
    rng = replication_rng(config.master_seed, r)
    data = generate_dataset(config.spec, config.generator, config.theta_true, rng)
    fit_seed = int(rng.integers(2 ** 62))
    ctx = LikelihoodContext(config.spec, config.generator, data)
    try:
        result = inference.test_hypothesis(ctx, config.hypothesis, config.rho_exponent,
                                           seed=fit_seed)
    except BoundaryEstimate:
        return ReplicationOutcome(r, STATUS_BOUNDARY)
    except FitNotConverged:
        return ReplicationOutcome(r, STATUS_NOT_CONVERGED)
    except InitializationError:
        return ReplicationOutcome(r, STATUS_INITIALIZATION)
    except (EvaluationError, NotPositiveDefinite, DomainError):
        return ReplicationOutcome(r, STATUS_EVALUATION)
    return ReplicationOutcome(r, STATUS_OK, result.lr, result.lr_star, result.lr_star_star,
                              result.degenerate.value)


def _replication_task(args):
    config, r = args
    return run_replication(config, r)


def replicate(config, threads=1):
    """
    Run every replication of a table cell.

    Returns:
        list: ReplicationOutcome objects in replication order
    """
    total = config.replications
    step = max(1, total // 10)
    tasks = [(config, r) for r in range(1, total + 1)]

    def progress(iterator):
        for done, outcome in enumerate(iterator, 1):
            if done % step == 0 or done == total:
                logger.info(f"[{config.label or 'study'}] {done}/{total} replications")
            yield outcome

    if threads <= 1:
        return list(progress(map(_replication_task, tasks)))
    chunksize = max(1, total // (threads * 8))
    with Pool(processes=threads) as pool:
        return list(progress(pool.imap(_replication_task, tasks, chunksize=chunksize)))


def _rate(values, critical):
    if not values:
        return None
    return 100.0 * sum(1 for v in values if v > critical) / len(values)


def tally(config, outcomes):
    """
    Reduce replication outcomes (in replication order) into a SimReport.
    """
    outcomes = sorted(outcomes, key=lambda o: o.index)
    ok = [o for o in outcomes if o.status == STATUS_OK]
    regular = [o for o in ok if o.degenerate == Degeneracy.NONE.value]
    failures = {}
    for o in outcomes:
        if o.status != STATUS_OK:
            failures[o.status] = failures.get(o.status, 0) + 1

    critical = {g: chi2_quantile(1.0 - g, config.q) for g in config.levels}
    rates = {name: {level_key(g): _rate([o.statistic(name) for o in ok], critical[g])
                    for g in config.levels}
             for name in STATISTICS}
    rates_exclude = {name: {level_key(g): _rate([o.statistic(name) for o in regular], critical[g])
                            for g in config.levels}
                     for name in ADJUSTED}
    return SimReport(
        label=config.label,
        q=config.q,
        group_sizes=config.spec.group_sizes,
        levels=config.levels,
        replications=len(outcomes),
        used=len(ok),
        degenerate=len(ok) - len(regular),
        rates=rates,
        rates_exclude=rates_exclude,
        failures=failures,
    )


def rejection_study(config, threads=1):
    """
    Run every replication of one table cell and tally the rejection rates.

    Replication r draws from replication_rng(master_seed, r), so the report
    does not depend on the number of worker processes.

    Args:
        config (SimConfig): Table cell
        threads (int): Worker processes (1 runs in-process)

    Returns:
        SimReport: Rates, denominators and failure tallies
    """
    logger.info(f"Rejection study '{config.label}': R = {config.replications}, q = {config.q}, "
                f"n_k = {config.spec.group_sizes[0]}, threads = {threads}")
    started = time.perf_counter()
    report = tally(config, replicate(config, threads))
    report.wall_clock = time.perf_counter() - started
    if report.failures:
        logger.warning(f"'{config.label}': failed replications {report.failures}")
    return report


def run_sweep(configs, threads=1):
    """Run a list of table cells in order."""
    return [rejection_study(config, threads) for config in configs]
