"""Tests for the conditional default probabilities and chi functions."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from becorr.copula import (
    ArchimedeanKernel,
    ClaytonKernel,
    GaussianKernel,
    chi_clayton,
    chi_gauss,
    clayton_factor_density,
    cond_default_clayton,
    cond_default_gauss1f,
    cond_default_gauss_pf,
    gaussian_factorization_residual,
    kernel_for,
    sigma_from_beta,
    vol_beta,
)
from becorr.errors import DomainError, ShapeError
from becorr.model import CopulaSpec
from becorr.quadrature import hermite_rule, laguerre_rule, tensor_hermite_rule


class TestGaussianOneFactor:
    """p_{i|x} of the one-factor Gaussian copula."""

    def test_independent(self):
        np.testing.assert_allclose(cond_default_gauss1f(0.95, 0.0, np.array([-2.0, 0.0, 3.0])), 0.05, rtol=1e-14)

    def test_median(self):
        assert cond_default_gauss1f(0.5, 0.6, 0.0) == pytest.approx(0.5, abs=1e-15)

    def test_against_scipy(self):
        expected = stats.norm.cdf((stats.norm.isf(0.9) - 0.5) / math.sqrt(0.75))
        assert cond_default_gauss1f(0.9, 0.5, 1.0) == pytest.approx(expected, rel=1e-13)

    def test_loading_range(self):
        with pytest.raises(DomainError):
            cond_default_gauss1f(0.9, 1.0, 0.0)
        with pytest.raises(DomainError):
            cond_default_gauss1f(1.0, 0.5, 0.0)


class TestGaussianPFactor:
    def test_embedding(self):
        x = np.array([[0.7, -1.2], [-0.3, 2.0]])
        np.testing.assert_allclose(
            cond_default_gauss_pf(0.8, np.array([0.4, 0.0]), x), cond_default_gauss1f(0.8, 0.4, x[:, 0]), rtol=1e-15
        )

    def test_zero_loadings(self):
        np.testing.assert_allclose(cond_default_gauss_pf(0.85, np.zeros(3), np.ones(3)), 0.15, rtol=1e-14)

    def test_latent_variable_monte_carlo(self):
        """p_{i|x} is the default frequency of X = rho'x + sqrt(1 - |rho|^2) eps below Phi^-1(1 - Q)."""
        rho, x = np.array([0.4, 0.3]), np.array([1.0, -1.0])
        rng = np.random.default_rng(7)
        eps = rng.standard_normal(400_000)
        latent = rho @ x + math.sqrt(1 - rho @ rho) * eps
        defaults = latent <= stats.norm.ppf(0.15)
        std_error = defaults.std() / math.sqrt(defaults.size)
        assert abs(defaults.mean() - cond_default_gauss_pf(0.85, rho, x)) < 4 * std_error

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            cond_default_gauss_pf(0.8, np.array([0.4, 0.3]), np.ones(3))


class TestClayton:
    def test_zero_factor(self):
        assert cond_default_clayton(0.7, 2.0, 0.0) == 1.0

    def test_total_probability(self):
        theta, q = 0.5, 0.9
        value = laguerre_rule(theta).apply(cond_default_clayton(q, theta, laguerre_rule(theta).nodes))
        assert value == pytest.approx(1 - q, abs=1e-8)

    def test_domain(self):
        with pytest.raises(DomainError):
            cond_default_clayton(0.9, 0.0, 1.0)
        with pytest.raises(DomainError):
            cond_default_clayton(0.9, 0.5, -1.0)
        with pytest.raises(DomainError):
            cond_default_clayton(1 - 1e-13, 0.5, 1.0)

    def test_factor_density(self):
        x = np.array([0.5, 1.0, 4.0])
        np.testing.assert_allclose(clayton_factor_density(x, 0.5), stats.gamma.pdf(x, 2.0), rtol=1e-13)


class TestChi:
    """chi is the running integral of d2p/dQ2 against the factor density."""

    def test_gauss_zero_loading(self):
        np.testing.assert_array_equal(chi_gauss(0.9, 0.0, np.array([-1.0, 0.0, 2.0])), 0.0)

    def test_gauss_tail(self):
        assert abs(chi_gauss(0.9, 0.5, 40.0)) < 1e-300

    def test_gauss_running_integral(self):
        kernel = GaussianKernel([0.5], hermite_rule())
        d2p = lambda u: kernel.d2p_dq2(np.array([0.9]), np.array([u]))[0, 0] * stats.norm.pdf(u)
        expected, _ = integrate.quad(d2p, -8, 0.3, epsabs=1e-13)
        assert chi_gauss(0.9, 0.5, 0.3) == pytest.approx(expected, abs=1e-7)

    def test_gauss_second_derivative(self):
        """Closed-form d2p/dQ2 against central differences of p."""
        kernel = GaussianKernel([0.5], hermite_rule())
        x, h = np.array([0.3]), 1e-4
        p = lambda q: cond_default_gauss1f(q, 0.5, 0.3)
        numeric = (p(0.9 + h) - 2 * p(0.9) + p(0.9 - h)) / h**2
        assert kernel.d2p_dq2(np.array([0.9]), x)[0, 0] == pytest.approx(numeric, rel=1e-5)

    def test_clayton_origin_and_small_theta(self):
        assert chi_clayton(0.8, 1.0, 0.0) == 0.0
        assert abs(chi_clayton(0.8, 1e-8, 1.0)) < 1e-6

    def test_clayton_running_integral(self):
        kernel = ClaytonKernel(1.0, laguerre_rule(1.0))
        d2p = lambda u: kernel.d2p_dq2(np.array([0.8]), np.array([u]))[0, 0] * stats.gamma.pdf(u, 1.0)
        expected, _ = integrate.quad(d2p, 0, 1, epsabs=1e-13)
        assert chi_clayton(0.8, 1.0, 1.0) == pytest.approx(expected, abs=1e-7)

    def test_kernel_chi_matches_function(self):
        kernel = GaussianKernel([0.3, 0.6], hermite_rule())
        x = np.array([-1.0, 0.5])
        np.testing.assert_allclose(kernel.chi(np.array([0.9, 0.8]), x)[:, 1], chi_gauss(0.8, 0.6, x), rtol=1e-13)


class TestVolBeta:
    def test_zero(self):
        assert vol_beta(0.0, 0.7) == 0.0

    def test_median(self):
        assert vol_beta(0.3, 0.5) == pytest.approx(0.3 * math.sqrt(2 * math.pi))

    def test_against_scipy(self):
        expected = 0.02 / stats.norm.pdf(stats.norm.ppf(0.9))
        assert vol_beta(0.02, 0.9) == pytest.approx(expected, rel=1e-13)
        assert sigma_from_beta(expected, 0.9) == pytest.approx(0.02, rel=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            vol_beta(0.1, 1.0)


class TestFactorization:
    def test_gaussian_factorization(self):
        x = np.linspace(-5, 5, 41)
        for q, rho in [(0.9, 0.5), (0.6, -0.3), (0.99, 0.9)]:
            assert np.max(gaussian_factorization_residual(q, rho, x)) < 1e-13


class TestKernels:
    """Law of total probability and factory dispatch for all copula families."""

    @pytest.mark.parametrize("rho", [0.0, 0.3, 0.8])
    def test_gauss1f_total_probability(self, rho):
        kernel = kernel_for(CopulaSpec.flat(3, rho))
        assert kernel.total_probability_gap(np.array([0.3, 0.9, 0.99])) < 1e-8

    def test_gauss_pf_total_probability(self):
        kernel = kernel_for(CopulaSpec.gauss_pf([[0.4, 0.3], [0.5, 0.1]]))
        assert kernel.factor_dim == 2
        assert kernel.total_probability_gap(np.array([0.85, 0.6])) < 1e-8

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_clayton_total_probability(self, theta):
        kernel = kernel_for(CopulaSpec.clayton(theta))
        assert isinstance(kernel, ClaytonKernel)
        assert kernel.total_probability_gap(np.array([0.3, 0.5, 0.7])) < 1e-8

    def test_rule_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            GaussianKernel([[0.4, 0.3]], tensor_hermite_rule(8, 3))

    def test_p_factor_has_no_factor_derivative(self):
        kernel = kernel_for(CopulaSpec.gauss_pf([[0.4, 0.3], [0.5, 0.1]]), n_nodes=8)
        with pytest.raises(ShapeError):
            kernel.dp_dx(np.array([0.9, 0.8]))

    def test_dp_dq_against_differences(self):
        kernel = kernel_for(CopulaSpec.clayton(1.5))
        q, h = np.array([0.6, 0.8]), 1e-6
        numeric = (kernel.p(q + h) - kernel.p(q - h)) / (2 * h)
        np.testing.assert_allclose(kernel.dp_dq(q), numeric, rtol=1e-6, atol=1e-9)


class TestArchimedeanKernel:
    """Generic kernel given by the inverse Laplace transform only."""

    def test_gamma_factor_matches_clayton(self):
        theta = 1.0
        generic = ArchimedeanKernel.gamma_factor(theta, lambda u: u ** (-theta) - 1)
        clayton = ClaytonKernel(theta, laguerre_rule(theta))
        q = np.array([0.5, 0.8])
        np.testing.assert_allclose(generic.p(q), clayton.p(q), rtol=1e-13)
        np.testing.assert_allclose(generic.dp_dq(q), clayton.dp_dq(q), rtol=1e-6, atol=1e-12)
        x = np.array([0.2, 1.0, 3.0])
        np.testing.assert_allclose(generic.chi(q, x), clayton.chi(q, x), atol=1e-4)
        assert not generic.closed_form_chi
