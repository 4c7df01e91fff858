"""
TOML model and simulation configuration.

A model config holds the identifiability case, the problem size, the known
constants and the density generator:

    case = "lambda_x"
    l = 1
    p = 5
    lambda_x = 3.0
    family = "normal"

A simulation config adds the study design (group_size, q, replications,
levels, master_seed, null_value, rho_exponent) and an optional [truth] table.
group_size and q may be lists, in which case one table row is built per value.
"""

import itertools
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass

from src.models.eiv_model import Case, ModelSpec, known_constants_from_truth, true_parameters
from src.models.elliptical import DensityGenerator, Family
from src.models.inference import Hypothesis
from src.models.montecarlo import DEFAULT_LEVELS, SimConfig
from src.models.skovgaard import RhoExponent
from src.utils.errors import ConfigError
from src.utils.logger import get_logger
from src.utils.validator import ConfigValidator

logger = get_logger('config')

CASES = tuple(c.value for c in Case)
FAMILIES = tuple(f.value for f in Family)
EXPONENTS = tuple(e.value for e in RhoExponent)
TRUTH_KEYS = ('alpha', 'mu_x', 'sigma2_x', 'sigma2_u', 'sigma2_e', 'beta')


def read_toml(path):
    """
    Parse a TOML file.

    Raises:
        IOError: If the file cannot be read
        ConfigError: If the content is not valid TOML
    """
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except FileNotFoundError:
        raise IOError(f"Config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: invalid TOML: {e}")
    except (IOError, OSError) as e:
        raise IOError(f"Cannot read config file {path}: {e}")


@dataclass(frozen=True)
class ModelConfig:
    """Model keys of a configuration file."""

    case: Case
    l: int
    p: int
    lambda_x: object = None
    lambda_e: object = None
    alpha: object = None
    family: Family = Family.NORMAL
    dof: float = None

    def spec(self, group_sizes):
        try:
            return ModelSpec(self.l, self.p, tuple(group_sizes), self.case,
                             lambda_x=self.lambda_x, lambda_e=self.lambda_e, alpha=self.alpha)
        except ValueError as e:
            raise ConfigError(str(e))

    def generator(self):
        try:
            return DensityGenerator.from_name(self.family.value, self.l + 1, self.dof)
        except ValueError as e:
            raise ConfigError(str(e))


def parse_model_config(table, defaults=None):
    """
    Validate the model keys.

    Args:
        table (dict): Parsed TOML
        defaults (dict or None): Fallbacks for the known constants

    Returns:
        ModelConfig: The model section

    Raises:
        ConfigError: On missing or invalid keys
    """
    defaults = defaults or {}
    case = Case(ConfigValidator.get_choice(table, 'case', CASES))
    family = Family(ConfigValidator.get_choice(table, 'family', FAMILIES, 'normal'))
    dof = ConfigValidator.get_positive_float(table, 'dof', None)
    if family is Family.STUDENT_T and dof is None:
        raise ConfigError("'dof' is required for family 'student_t'")
    if family is Family.NORMAL:
        dof = None

    constants = {}
    key = {Case.LAMBDA_X_KNOWN: 'lambda_x', Case.LAMBDA_E_KNOWN: 'lambda_e',
           Case.INTERCEPT_KNOWN: 'alpha'}[case]
    value = ConfigValidator.get_float_array(table, key, defaults.get(key))
    if value is None:
        raise ConfigError(f"Missing required key '{key}' for case '{case.value}'")
    constants[key] = value

    return ModelConfig(
        case=case,
        l=ConfigValidator.get_positive_integer(table, 'l'),
        p=ConfigValidator.get_positive_integer(table, 'p'),
        family=family,
        dof=dof,
        **constants,
    )


def load_model_config(path):
    return parse_model_config(read_toml(path))


def _truth(table):
    truth = table.get('truth', {})
    if not isinstance(truth, dict):
        raise ConfigError("'truth' must be a table")
    unknown = set(truth) - set(TRUTH_KEYS)
    if unknown:
        raise ConfigError(f"Unknown keys in [truth]: {', '.join(sorted(unknown))}")
    values = {}
    for key in TRUTH_KEYS:
        if key in truth:
            if key.startswith('sigma2_'):
                values[key] = ConfigValidator.get_positive_float(truth, key)
            elif key == 'beta':
                values[key] = ConfigValidator.get_float_array(truth, key)
            else:
                values[key] = ConfigValidator.get_float(truth, key)
    return values


def parse_sim_config(table, replications=None, master_seed=None):
    """
    Build the SimConfig rows of a simulation config.

    The true slopes default to the null value in every group, and the known
    constants default to the values implied by the truth (lambda_x =
    sigma2_x / sigma2_u, lambda_e = sigma2_e / sigma2_u, known intercept 0).

    Args:
        table (dict): Parsed TOML
        replications (int or None): Override of 'replications'
        master_seed (int or None): Override of 'master_seed'

    Returns:
        list: SimConfig rows, in sweep order (q outer, group_size inner)

    Raises:
        ConfigError: On missing or invalid keys
    """
    truth = _truth(table)
    lambda_x, lambda_e = known_constants_from_truth(
        truth.get('sigma2_x', 1.5), truth.get('sigma2_u', 0.5), truth.get('sigma2_e', 2.0))
    model = parse_model_config(table, {'lambda_x': lambda_x, 'lambda_e': lambda_e, 'alpha': 0.0})

    if replications is not None:
        table = dict(table, replications=replications)
    if master_seed is not None:
        table = dict(table, master_seed=master_seed)
    reps = ConfigValidator.get_positive_integer(table, 'replications')
    seed = ConfigValidator.get_non_negative_integer(table, 'master_seed', 0)
    levels = ConfigValidator.get_probabilities(table, 'levels', list(DEFAULT_LEVELS))
    sizes = ConfigValidator.get_integer_list(table, 'group_size')
    qs = ConfigValidator.get_integer_list(table, 'q')
    default_null = 1.0 if model.case is Case.INTERCEPT_KNOWN else 0.0
    null_value = ConfigValidator.get_float(table, 'null_value', default_null)
    exponent = RhoExponent(ConfigValidator.get_choice(table, 'rho_exponent', EXPONENTS, 'q-half'))

    generator = model.generator()
    truth.setdefault('beta', null_value)
    rows = []
    for q, n_k in itertools.product(qs, sizes):
        spec = model.spec([n_k] * model.p)
        try:
            theta_true = true_parameters(spec, **truth)
            hypothesis = Hypothesis.slopes(spec, q, null_value)
        except ValueError as e:
            raise ConfigError(str(e))
        label = ", ".join(part for part, swept in
                          ((f"q={q}", len(qs) > 1), (f"n_k={n_k}", len(sizes) > 1)) if swept)
        rows.append(SimConfig(spec, generator, theta_true, hypothesis, reps, levels, seed,
                              exponent, label or f"q={q}, n_k={n_k}"))
    logger.debug(f"Built {len(rows)} simulation rows")
    return rows


def load_sim_config(path, replications=None, master_seed=None):
    return parse_sim_config(read_toml(path), replications, master_seed)
