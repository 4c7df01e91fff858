"""
Shared fixtures: small specifications, simulated datasets and contexts.
"""

import numpy as np
import pytest

from src.models.eiv_model import Case, ModelSpec, true_parameters
from src.models.elliptical import DensityGenerator
from src.models.likelihood import LikelihoodContext
from src.models.montecarlo import generate_dataset

KNOWN = {
    Case.LAMBDA_X_KNOWN: {'lambda_x': 3.0},
    Case.LAMBDA_E_KNOWN: {'lambda_e': 4.0},
    Case.INTERCEPT_KNOWN: {'alpha': 0.0},
}


def make_spec(case, l=1, p=2, n_k=30):
    return ModelSpec(l, p, (n_k,) * p, case, **KNOWN[case])


def make_generator(family, dim):
    if family == "normal":
        return DensityGenerator.normal(dim)
    return DensityGenerator.student_t(dim, 3.0)


def make_context(case, family="normal", l=1, p=2, n_k=30, seed=1, beta=0.7):
    spec = make_spec(case, l, p, n_k)
    gen = make_generator(family, l + 1)
    theta = true_parameters(spec, beta=beta)
    data = generate_dataset(spec, gen, theta, np.random.default_rng(seed))
    return LikelihoodContext(spec, gen, data), theta


def perturbed(theta, rng, scale=0.2):
    """Random interior point near theta (variances stay positive)."""
    values = theta.values.copy()
    mask = theta.variance_mask()
    values[mask] *= np.exp(scale * rng.standard_normal(mask.sum()))
    values[~mask] += scale * rng.standard_normal((~mask).sum())
    return theta.with_values(values)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def context_factory():
    return make_context


@pytest.fixture
def spec_factory():
    return make_spec


@pytest.fixture
def perturb():
    return perturbed
