"""Tests for the drift of delta-hedged baskets."""

import math

import numpy as np
import pytest
from scipy import integrate, stats

from becorr.common import norm_pdf, norm_ppf, uniform_correlation
from becorr.copula import ArchimedeanKernel, ClaytonKernel, kernel_for
from becorr.drift import (
    a_star,
    betas_from_dynamics,
    betas_from_vols,
    check_replication_pde,
    drift_count,
    drift_fptd,
    drift_gauss,
    drift_general,
)
from becorr.dynamics import clayton_replication_vols, clayton_spread_corr
from becorr.errors import DomainError, ShapeError
from becorr.model import BasketPayoff, CopulaSpec, DynamicsSpec, MarketState, XiSchedule
from becorr.quadrature import laguerre_rule

LOADINGS = np.array([0.3, 0.5, 0.6, 0.4])
SURVIVAL = np.array([0.9, 0.85, 0.8, 0.95])
BETAS = np.array([0.5, 1.0, 1.5, 0.8])


def _random_corr(n, seed):
    rng = np.random.default_rng(seed)
    factors = rng.uniform(-0.6, 0.9, size=(n, 2)) / 1.5
    corr = factors @ factors.T
    np.fill_diagonal(corr, 1.0)
    return corr


def _factor_corr(loadings):
    corr = np.outer(loadings, loadings)
    np.fill_diagonal(corr, 1.0)
    return corr


@pytest.fixture
def market():
    return MarketState.from_survival(SURVIVAL, recovery=0.4)


class TestGaussianDrift:
    """Pair decomposition of the drift under the Gaussian copula."""

    def test_zero_volatility(self, market):
        copula = CopulaSpec.gauss1f(LOADINGS)
        report = drift_gauss(BasketPayoff.fptd(4, 1, 0.4), market, copula, np.zeros(4), _random_corr(4, 1))
        assert report.total == 0.0
        assert len(report.pair_terms) == 6

    def test_replicating_dynamics_have_no_drift(self, market):
        copula = CopulaSpec.gauss1f(LOADINGS)
        corr = _factor_corr(LOADINGS)
        for payoff in (BasketPayoff.fptd(4, 2, 0.4), BasketPayoff.generic(4, lambda d: d[0] * (1 - d[3]))):
            report = drift_gauss(payoff, market, copula, np.full(4, 0.7), corr)
            assert report.total == pytest.approx(0.0, abs=1e-10)

    def test_p_factor_replicating_dynamics(self, market):
        loadings = np.array([[0.3, 0.2], [0.5, -0.1], [0.2, 0.6], [0.4, 0.4]])
        copula = CopulaSpec.gauss_pf(loadings)
        corr = copula.pricing_correlation()
        report = drift_gauss(BasketPayoff.fptd(4, 1, 0.4), market, copula, 0.9, corr)
        assert report.total == pytest.approx(0.0, abs=1e-10)

    def test_independent_pricing_ftd_is_negative(self):
        market = MarketState.from_survival([0.9, 0.8])
        report = drift_gauss(BasketPayoff.fptd(2, 1), market, CopulaSpec.flat(2, 0.0), [1.0, 1.0], uniform_correlation(2, 0.5))
        assert report.total < 0

    def test_spread_correlation_pricing_with_unequal_betas_is_positive(self, market):
        """Pricing at rho^2 = r with unequal betas leaves r (beta_i - beta_j)^2 > 0 in every bracket."""
        r = 0.3
        copula = CopulaSpec.flat(4, math.sqrt(r))
        corr = uniform_correlation(4, r)
        payoff = BasketPayoff.fptd(4, 1, 0.4)
        assert drift_gauss(payoff, market, copula, BETAS, corr).total > 0
        assert drift_gauss(payoff, market, copula, np.ones(4), corr).total == pytest.approx(0.0, abs=1e-12)

    def test_drift_scales_with_beta_squared(self, market):
        copula = CopulaSpec.gauss1f(LOADINGS)
        corr = _random_corr(4, 2)
        payoff = BasketPayoff.fptd(4, 2, 0.4)
        base = drift_gauss(payoff, market, copula, BETAS, corr).total
        assert drift_gauss(payoff, market, copula, 3 * BETAS, corr).total == pytest.approx(9 * base, rel=1e-12)

    def test_count_payoff(self, market):
        copula = CopulaSpec.gauss1f(LOADINGS)
        corr = _random_corr(4, 3)
        payoff = BasketPayoff.fptd(4, 3, 0.4)
        by_count = drift_count(payoff.count_values, market, copula, BETAS, corr)
        assert by_count.total == pytest.approx(drift_gauss(payoff, market, copula, BETAS, corr).total, abs=1e-14)
        with pytest.raises(DomainError):
            drift_count(BasketPayoff.generic(4, lambda d: d[0]), market, copula, BETAS, corr)

    def test_defaulted_names_drop_out(self):
        market = MarketState(("a", "b", "c"), 1.0, [0.0, 0.9, 0.8], 0.0, defaulted=[True, False, False])
        report = drift_gauss(BasketPayoff.fptd(3, 2), market, CopulaSpec.flat(3, 0.3), 1.0, uniform_correlation(3, 0.5))
        assert set(report.pair_terms) == {(1, 2)}

    def test_shape_mismatch(self, market):
        with pytest.raises(ShapeError):
            drift_gauss(BasketPayoff.fptd(4, 1, 0.4), market, CopulaSpec.gauss1f(LOADINGS), BETAS, np.eye(3))

    def test_clayton_rejected(self, market):
        with pytest.raises(DomainError):
            drift_gauss(BasketPayoff.fptd(4, 1, 0.4), market, CopulaSpec.clayton(1.0), BETAS, np.eye(4))


class TestGeneralDrift:
    """Kernel-generic drift against the Gaussian specialisation."""

    @pytest.mark.parametrize("order", [1, 2, 4])
    def test_matches_gaussian(self, market, order):
        copula = CopulaSpec.gauss1f(LOADINGS)
        corr = _random_corr(4, 4)
        payoff = BasketPayoff.fptd(4, order, 0.4)
        vols = BETAS * norm_pdf(norm_ppf(SURVIVAL))
        general = drift_general(payoff, market, kernel_for(copula), vols, corr)
        gauss = drift_gauss(payoff, market, copula, BETAS, corr)
        assert general.eta == 0.0
        assert not general.numeric_chi
        for pair, value in gauss.pair_terms.items():
            assert general.pair_terms[pair] == pytest.approx(value, abs=1e-9)
        assert general.total == pytest.approx(gauss.total, abs=1e-9)

    def test_matches_gaussian_for_table_payoff(self, market):
        copula = CopulaSpec.gauss1f(LOADINGS)
        corr = _random_corr(4, 5)
        payoff = BasketPayoff.generic(4, lambda d: d[0] * d[1] + 0.5 * d[2] * (1 - d[3]))
        vols = BETAS * norm_pdf(norm_ppf(SURVIVAL))
        general = drift_general(payoff, market, kernel_for(copula), vols, corr)
        gauss = drift_gauss(payoff, market, copula, BETAS, corr)
        assert general.total == pytest.approx(gauss.total, abs=1e-9)

    def test_clayton_replicating_dynamics(self, market):
        theta = 0.7
        kernel = ClaytonKernel(theta, laguerre_rule(theta))
        vols = clayton_replication_vols(theta, 0.4, SURVIVAL)
        corr = clayton_spread_corr(theta, SURVIVAL)
        for payoff in (BasketPayoff.fptd(4, 1, 0.4), BasketPayoff.fptd(4, 3, 0.4)):
            assert drift_general(payoff, market, kernel, vols, corr).total == pytest.approx(0.0, abs=1e-10)

    def test_numeric_chi_is_flagged(self):
        market = MarketState.from_survival([0.7, 0.8])
        kernel = ArchimedeanKernel.gamma_factor(1.0, lambda u: u**-1.0 - 1)
        with pytest.warns(UserWarning, match="closed-form chi"):
            report = drift_general(BasketPayoff.fptd(2, 1), market, kernel, [0.05, 0.05], uniform_correlation(2, 0.3))
        assert report.numeric_chi
        assert np.isfinite(report.total)

    def test_p_factor_kernel_rejected(self, market):
        kernel = kernel_for(CopulaSpec.gauss_pf([[0.3, 0.2]] * 4), n_nodes=8)
        with pytest.raises(ShapeError):
            drift_general(BasketPayoff.fptd(4, 1, 0.4), market, kernel, BETAS, np.eye(4))


class TestFirstToDefaultDrift:
    """Closed-form pair weights of first-p-to-default baskets."""

    @pytest.mark.parametrize("n", range(2, 9))
    def test_matches_gaussian_drift(self, n):
        rng = np.random.default_rng(n)
        market = MarketState.from_survival(rng.uniform(0.6, 0.98, n), recovery=0.3)
        copula = CopulaSpec.gauss1f(rng.uniform(0.1, 0.7, n))
        betas = rng.uniform(0.3, 1.5, n)
        corr = _random_corr(n, n + 10)
        for p in range(1, n + 1):
            closed = drift_fptd(p, market, copula, betas, corr)
            generic = drift_gauss(BasketPayoff.fptd(n, p, 0.3), market, copula, betas, corr)
            assert closed.total == pytest.approx(generic.total, abs=1e-9)
            assert set(closed.a_star) == set(generic.pair_terms)

    def test_vanishing_brackets(self):
        betas = np.array([1.0, 1.2, 0.9])
        loadings = np.array([0.3, 0.4, 0.5])
        corr = np.outer(loadings, loadings) * (betas[:, None] ** 2 + betas[None, :] ** 2) / (2 * np.outer(betas, betas))
        np.fill_diagonal(corr, 1.0)
        market = MarketState.from_survival([0.9, 0.8, 0.85])
        report = drift_fptd(1, market, CopulaSpec.gauss1f(loadings), betas, corr)
        assert report.total == pytest.approx(0.0, abs=1e-10)

    def test_two_names_weight(self):
        """With two names the weight has no product over the other names."""
        q, rho = np.array([0.9, 0.8]), np.array([0.3, 0.6])
        s, c = stats.norm.isf(q), np.sqrt(1 - rho**2)
        integrand = lambda x: np.prod(stats.norm.pdf((s - rho * x) / c) / c) * stats.norm.pdf(x)
        expected, _ = integrate.quad(integrand, -12, 12, epsabs=1e-14)
        weights = a_star(1, MarketState.from_survival(q), CopulaSpec.gauss1f(rho))
        assert weights[(0, 1)] == pytest.approx(expected, abs=1e-10)
        assert a_star(2, MarketState.from_survival(q), CopulaSpec.gauss1f(rho))[(0, 1)] == 0.0

    def test_order_range(self, market):
        with pytest.raises(DomainError):
            a_star(5, market, CopulaSpec.gauss1f(LOADINGS))


class TestBetas:
    def test_from_dynamics(self):
        spec = DynamicsSpec([0.5, 0.2], XiSchedule.merton(5), np.eye(2))
        market = MarketState.from_survival([0.9, 0.8], maturity=5, time=4)
        np.testing.assert_allclose(betas_from_dynamics(spec, market), [0.5, 0.2])
        with pytest.raises(DomainError):
            betas_from_dynamics(spec, MarketState.from_survival([0.9, 0.8], maturity=4))

    def test_from_vols(self):
        assert betas_from_vols(0.1, 0.5) == pytest.approx(0.1 * math.sqrt(2 * math.pi))


class TestReplicationCondition:
    """Pointwise residual of the replication condition on a grid of survival probabilities."""

    Q_GRID = [(0.9, 0.8, 0.7), (0.5, 0.95, 0.99), (0.2, 0.4, 0.6)]

    def test_gaussian(self):
        loadings = np.array([0.3, 0.5, 0.6])
        kernel = kernel_for(CopulaSpec.gauss1f(loadings))
        vols = lambda q: 0.8 * norm_pdf(norm_ppf(q))
        result = check_replication_pde(kernel, vols, _factor_corr(loadings), self.Q_GRID)
        assert result.max_residual < 1e-10

    def test_clayton(self):
        theta = 0.7
        kernel = ClaytonKernel(theta, laguerre_rule(theta))
        vols = lambda q: clayton_replication_vols(theta, 0.4, q)
        corr = lambda q: clayton_spread_corr(theta, q)
        result = check_replication_pde(kernel, vols, corr, self.Q_GRID, x_grid=np.linspace(0.01, 10, 200))
        assert result.max_residual < 1e-8

    def test_archimedean_with_constant_correlation(self):
        """Constant spread correlations cannot replicate a Gamma-factor kernel."""
        kernel = ArchimedeanKernel.gamma_factor(1.0, lambda u: u**-1.0 - 1)
        result = check_replication_pde(
            kernel, [0.05, 0.05], uniform_correlation(2, 0.3), [(0.7, 0.8)], x_grid=[0.5, 1.0, 2.0]
        )
        assert result.max_residual > 1e-6
        assert result.pair == (0, 1)

    def test_gaussian_mismatch_reported(self):
        kernel = kernel_for(CopulaSpec.flat(2, 0.5))
        result = check_replication_pde(kernel, [0.1, 0.1], uniform_correlation(2, 0.9), [(0.9, 0.8)])
        assert result.max_residual > 1e-6
        assert result.survival == (0.9, 0.8)
