"""
Tests for the parameter layout, mu_k, Sigma_k and their derivatives.
"""

import numpy as np
import pytest

from src.models.eiv_model import (
    Case, ModelSpec, ParamVector, build_mu, build_sigma, d2_mu, d2_sigma, d2_sigma_inv, d_mu,
    d_sigma, d_sigma_inv, known_constants_from_truth, latent_representation, true_parameters
)
from src.utils.matrix_kernels import cholesky, d_cholesky

from conftest import make_spec, perturbed

POINTS = 20


def block(spec, **values):
    out = np.zeros(spec.s)
    for name, value in values.items():
        out[spec.index(name)] = value
    return out


class TestLayout:
    """Coordinate names, sizes and flat indexing."""

    def test_sizes(self):
        assert make_spec(Case.LAMBDA_X_KNOWN, l=2).s == 7
        assert make_spec(Case.LAMBDA_E_KNOWN, l=2).s == 6
        assert make_spec(Case.INTERCEPT_KNOWN, l=2).s == 7
        assert make_spec(Case.LAMBDA_E_KNOWN, l=1, p=5).m == 25

    def test_names(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN, l=2)
        assert spec.coordinate_names() == [
            'beta1', 'beta2', 'alpha', 'mu_x', 'sigma2_u', 'sigma2_e1', 'sigma2_e2']
        spec = make_spec(Case.INTERCEPT_KNOWN, l=1)
        assert spec.coordinate_names() == ['beta1', 'mu_x', 'sigma2_x', 'sigma2_u', 'sigma2_e1']

    def test_index_of(self):
        spec = make_spec(Case.LAMBDA_E_KNOWN, l=1, p=3)
        theta = true_parameters(spec)
        assert theta.index_of('beta1', 2) == 5
        assert theta.names()[theta.index_of('sigma2_u', 3)] == 'sigma2_u@3'
        with pytest.raises(KeyError):
            theta.index_of('beta1', 4)
        with pytest.raises(KeyError):
            theta.index_of('sigma2_e1', 1)

    def test_variance_mask(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN, l=1, p=2)
        mask = true_parameters(spec).variance_mask()
        assert mask.tolist() == [False, False, False, True, True] * 2

    def test_wrong_length(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        with pytest.raises(ValueError):
            ParamVector(spec, np.ones(spec.m + 1))

    def test_missing_constant(self):
        with pytest.raises(ValueError):
            ModelSpec(1, 2, (10, 10), Case.LAMBDA_X_KNOWN)

    def test_truth_preset(self):
        spec = make_spec(Case.INTERCEPT_KNOWN)
        b = true_parameters(spec).block(0)
        assert b[spec.index('mu_x')] == 5.0 and b[spec.index('beta1')] == 1.0
        assert known_constants_from_truth() == (3.0, 4.0)


class TestMu:
    """Location vector and its derivatives."""

    def test_zero_slope(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = block(spec, alpha=0.5, mu_x=0.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(build_mu(spec, theta, 0), [0.5, 0.5])

    def test_known_intercept(self):
        spec = make_spec(Case.INTERCEPT_KNOWN)
        theta = block(spec, beta1=1.0, mu_x=5.0, sigma2_x=1.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(build_mu(spec, theta, 0), [5.0, 5.0])

    def test_two_responses(self):
        spec = make_spec(Case.LAMBDA_E_KNOWN, l=2)
        theta = block(spec, beta1=2.0, beta2=-1.0, alpha=1.0, mu_x=3.0, sigma2_x=1.0, sigma2_u=1.0)
        np.testing.assert_allclose(build_mu(spec, theta, 0), [7.0, -2.0, 3.0])

    def test_first_derivatives(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = block(spec, beta1=0.7, alpha=0.5, mu_x=0.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(d_mu(spec, theta, 0), [0.5, 0.0])
        np.testing.assert_allclose(d_mu(spec, theta, 2), [0.7, 1.0])
        np.testing.assert_allclose(d_mu(spec, theta, 3), [0.0, 0.0])

    def test_second_derivatives(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = true_parameters(spec).block(0)
        np.testing.assert_allclose(d2_mu(spec, theta, 0, 2), [1.0, 0.0])
        np.testing.assert_allclose(d2_mu(spec, theta, 2, 2), [0.0, 0.0])
        spec = make_spec(Case.INTERCEPT_KNOWN, l=2)
        theta = true_parameters(spec).block(0)
        np.testing.assert_allclose(d2_mu(spec, theta, 1, 2), [0.0, 1.0, 0.0])

    def test_index_out_of_range(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        with pytest.raises(IndexError):
            d_mu(spec, true_parameters(spec).block(0), spec.s)


class TestSigma:
    """Dispersion matrix and its derivatives."""

    def test_lambda_e_truth(self):
        spec = make_spec(Case.LAMBDA_E_KNOWN)
        theta = block(spec, alpha=0.5, mu_x=0.5, sigma2_x=1.5, sigma2_u=0.5)
        np.testing.assert_allclose(build_sigma(spec, theta, 0), [[2.0, 0.0], [0.0, 2.0]])

    def test_lambda_x_truth(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = block(spec, alpha=0.5, mu_x=0.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(build_sigma(spec, theta, 0), [[2.0, 0.0], [0.0, 2.0]])

    def test_slope_derivative(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = block(spec, beta1=0.7, mu_x=0.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(d_sigma(spec, theta, 0), [[2 * 0.7 * 1.5, 1.5], [1.5, 0.0]])

    def test_lambda_e_scale_derivative(self):
        spec = make_spec(Case.LAMBDA_E_KNOWN)
        theta = true_parameters(spec).block(0)
        np.testing.assert_allclose(d_sigma(spec, theta, spec.index('sigma2_u')),
                                   [[4.0, 0.0], [0.0, 1.0]])

    def test_second_derivatives(self):
        spec = make_spec(Case.LAMBDA_X_KNOWN)
        theta = block(spec, beta1=0.7, mu_x=0.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(d2_sigma(spec, theta, 0, 0), [[3.0, 0.0], [0.0, 0.0]])
        spec = make_spec(Case.INTERCEPT_KNOWN)
        theta = block(spec, beta1=0.7, mu_x=5.0, sigma2_x=1.5, sigma2_u=0.5, sigma2_e1=2.0)
        np.testing.assert_allclose(d2_sigma(spec, theta, 0, spec.index('sigma2_x')),
                                   [[1.4, 1.0], [1.0, 0.0]])

    @pytest.mark.parametrize("case", list(Case))
    def test_finite_differences(self, case, rng):
        spec = make_spec(case, l=2)
        truth = true_parameters(spec, beta=[0.7, -0.4])
        h = 1e-6
        for _ in range(POINTS):
            theta = perturbed(truth, rng).block(0)
            factor = cholesky(build_sigma(spec, theta, 0))
            for i in range(spec.s):
                e = np.zeros(spec.s)
                e[i] = h
                up, down = build_sigma(spec, theta + e, 0), build_sigma(spec, theta - e, 0)
                np.testing.assert_allclose(d_sigma(spec, theta, i), (up - down) / (2 * h),
                                           rtol=1e-5, atol=1e-6)
                np.testing.assert_allclose(
                    d_cholesky(factor, d_sigma(spec, theta, i)),
                    (cholesky(up).matrix - cholesky(down).matrix) / (2 * h), rtol=1e-5, atol=1e-6)
                for j in range(spec.s):
                    numeric = (d_sigma(spec, theta + e, j) - d_sigma(spec, theta - e, j)) / (2 * h)
                    np.testing.assert_allclose(d2_sigma(spec, theta, i, j), numeric,
                                               rtol=1e-5, atol=1e-6)

    @pytest.mark.parametrize("case", list(Case))
    def test_zero_slope_is_block_diagonal(self, case):
        spec = make_spec(case, l=2)
        sigma = build_sigma(spec, true_parameters(spec, beta=0.0).block(0), 0)
        assert np.all(sigma[:2, 2] == 0.0)

    def test_latent_representation(self, rng):
        spec = make_spec(Case.LAMBDA_E_KNOWN, l=2)
        theta = perturbed(true_parameters(spec, beta=[0.7, -0.4]), rng).block(0)
        delta, delta_mat, eta, omega = latent_representation(spec, theta, 0)
        np.testing.assert_allclose(delta + delta_mat @ eta, build_mu(spec, theta, 0))
        np.testing.assert_allclose(delta_mat @ np.diag(omega) @ delta_mat.T,
                                   build_sigma(spec, theta, 0))


class TestInverseDerivatives:
    """Derivatives of Sigma^-1."""

    def test_identity(self):
        np.testing.assert_allclose(d_sigma_inv(np.eye(2), np.eye(2)), -np.eye(2))

    def test_scalar(self):
        assert d_sigma_inv([[0.25]], [[1.0]])[0, 0] == pytest.approx(-1.0 / 16.0)
        sigma2 = 1.7
        value = d2_sigma_inv([[1 / sigma2]], [[1.0]], [[1.0]], [[0.0]])[0, 0]
        assert value == pytest.approx(2.0 / sigma2 ** 3)

    def test_zero(self):
        z = np.zeros((2, 2))
        np.testing.assert_allclose(d2_sigma_inv(np.eye(2), z, z, z), z)

    def test_finite_difference(self, rng):
        a = rng.standard_normal((3, 3))
        sigma = a @ a.T + 3 * np.eye(3)
        si = rng.standard_normal((3, 3))
        si = si + si.T
        sj = rng.standard_normal((3, 3))
        sj = sj + sj.T
        h = 1e-4
        inv = np.linalg.inv
        numeric = (inv(sigma + h * si) - inv(sigma - h * si)) / (2 * h)
        np.testing.assert_allclose(d_sigma_inv(inv(sigma), si), numeric, atol=1e-6)
        numeric2 = (inv(sigma + h * si + h * sj) - inv(sigma + h * si - h * sj)
                    - inv(sigma - h * si + h * sj) + inv(sigma - h * si - h * sj)) / (4 * h * h)
        np.testing.assert_allclose(d2_sigma_inv(inv(sigma), si, sj, np.zeros((3, 3))),
                                   numeric2, atol=1e-5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            d_sigma_inv(np.eye(2), np.eye(3))
