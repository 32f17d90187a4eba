"""
Drift per unit time of delta-hedged basket positions.

For a pair of names (i, j) the contribution is
    1/2 * integral of D_ij(x) [2 s_i s_j r_ij dp_i/dQ dp_j/dQ f_X - s_i^2 dp_j/dx chi_i - s_j^2 dp_i/dx chi_j] dx
where D_ij is the second mixed difference of the payoff weighted by the other names' conditional
default probabilities, s the survival-probability volatilities and r the spread correlations.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .copula import GaussianKernel, kernel_for, vol_beta
from .errors import DomainError, ShapeError
from .model import BasketPayoff, CopulaSpec, DriftReport, DynamicsSpec, MarketState
from .pricing import conditional_matrices, first_differences, kernel_inputs, leave_out_count, second_difference


def _pair_inputs(market, betas_or_vols, spread_corr):
    values = np.broadcast_to(np.asarray(betas_or_vols, dtype=float), (market.n,))
    corr = np.asarray(spread_corr, dtype=float)
    if corr.shape != (market.n, market.n):
        raise ShapeError(f"Spread correlation must be {market.n}x{market.n}, got {corr.shape}")
    alive = np.flatnonzero(market.alive)
    pairs = [(int(i), int(j)) for a, i in enumerate(alive) for j in alive[a + 1 :]]
    return values, corr, pairs


def _check_payoff(payoff, market):
    if payoff.n != market.n:
        raise DomainError(f"Payoff on {payoff.n} names does not match a market of {market.n} names")


def drift_general(payoff: BasketPayoff, market: MarketState, kernel, vols, spread_corr) -> DriftReport:
    """
    Drift for any one-factor kernel, with survival-probability volatilities sigma_i.
    Kernels without a closed-form chi use the numerical running integral and report the
    boundary term eta of the integration by parts.
    """
    _check_payoff(payoff, market)
    if kernel.factor_dim != 1:
        raise ShapeError("The general drift needs a one-factor kernel")
    sigma, corr, pairs = _pair_inputs(market, vols, spread_corr)
    survival, defaulted = kernel_inputs(market)
    p, dp = conditional_matrices(kernel, survival, defaulted)
    dpx = np.where(defaulted, 0.0, kernel.dp_dx(survival))
    chi_f = np.where(defaulted, 0.0, kernel.chi_over_density(survival))
    if not kernel.closed_form_chi:
        warnings.warn("Kernel has no closed-form chi; using the numerical running integral")

    pair_terms = {}
    for i, j in pairs:
        d = second_difference(payoff, p, i, j)
        bracket = (
            2 * sigma[i] * sigma[j] * corr[i, j] * dp[:, i] * dp[:, j]
            - sigma[i] ** 2 * chi_f[:, i] * dpx[:, j]
            - sigma[j] ** 2 * chi_f[:, j] * dpx[:, i]
        )
        pair_terms[(i, j)] = 0.5 * float(kernel.rule.apply(d * bracket))

    eta = 0.0
    if not kernel.closed_form_chi:
        ends = np.asarray(kernel.support)
        p_ends = np.where(defaulted, 1.0, kernel.p(survival, ends))
        chi_ends = np.where(defaulted, 0.0, kernel.chi(survival, ends))
        boundary = first_differences(payoff, p_ends) * chi_ends  # rows: lower, upper
        eta = 0.5 * float(np.sum(sigma**2 * (boundary[1] - boundary[0])))
    return DriftReport.from_terms(pair_terms, eta, numeric_chi=not kernel.closed_form_chi)


def _gaussian_kernel(copula, n_nodes):
    if not copula.is_gaussian:
        raise DomainError("Gaussian drift needs a Gaussian copula")
    return kernel_for(copula, n_nodes)


def drift_gauss(payoff: BasketPayoff, market: MarketState, copula: CopulaSpec, betas, spread_corr, n_nodes=None):
    """
    Gaussian-copula drift with beta_i = sigma_i / phi(Phi^-1(Q_i)):
    pair term 1/2 [2 beta_i beta_j r_ij - rho_i' rho_j (beta_i^2 + beta_j^2)] times the integral of
    D_ij phi(d_i) phi(d_j) / (sqrt(1 - |rho_i|^2) sqrt(1 - |rho_j|^2)) against the factor density.
    One- and p-factor copulas share this code path.
    """
    _check_payoff(payoff, market)
    kernel: GaussianKernel = _gaussian_kernel(copula, n_nodes)
    beta, corr, pairs = _pair_inputs(market, betas, spread_corr)
    survival, defaulted = kernel_inputs(market)
    p, _ = conditional_matrices(kernel, survival, defaulted)
    g = kernel.pair_density(survival)
    asset_corr = kernel.loadings @ kernel.loadings.T

    pair_terms = {}
    for i, j in pairs:
        coefficient = 2 * beta[i] * beta[j] * corr[i, j] - asset_corr[i, j] * (beta[i] ** 2 + beta[j] ** 2)
        d = second_difference(payoff, p, i, j)
        pair_terms[(i, j)] = 0.5 * coefficient * float(kernel.rule.apply(d * g[:, i] * g[:, j]))
    return DriftReport.from_terms(pair_terms)


def drift_count(g, market: MarketState, copula: CopulaSpec, betas, spread_corr, n_nodes=None) -> DriftReport:
    """
    Gaussian drift of a payoff g(N) of the number of defaults; D_ij reduces to
    sum_k P(k defaults among the other names | x) (g(k + 2) - 2 g(k + 1) + g(k)).
    """
    payoff = g if isinstance(g, BasketPayoff) else BasketPayoff.count(g)
    if not payoff.is_count:
        raise DomainError(f"Payoff of kind {payoff.kind.value} does not depend on the default count only")
    return drift_gauss(payoff, market, copula, betas, spread_corr, n_nodes)


def betas_from_dynamics(spec: DynamicsSpec, market: MarketState):
    """beta_it = sigma_bar_i xi(t) at the valuation time of the market."""
    if spec.n != market.n:
        raise ShapeError(f"Dynamics on {spec.n} names do not match a market of {market.n} names")
    if market.maturity != spec.maturity:
        raise DomainError(f"Market maturity {market.maturity} differs from the schedule maturity {spec.maturity}")
    return spec.betas(market.time)


def betas_from_vols(sigma, Q):
    return vol_beta(sigma, Q)


def a_star(p, market: MarketState, copula: CopulaSpec, n_nodes=None):
    """
    A*_ij: integral of P(exactly p - 1 defaults among the other names | x) phi(d_i) phi(d_j) / (c_i c_j)
    against the factor density, for all pairs of live names.
    """
    if not 1 <= p <= market.n:
        raise DomainError(f"Order p must be in 1..{market.n}, got {p}")
    kernel: GaussianKernel = _gaussian_kernel(copula, n_nodes)
    survival, defaulted = kernel_inputs(market)
    prob, _ = conditional_matrices(kernel, survival, defaulted)
    g = kernel.pair_density(survival)
    _, _, pairs = _pair_inputs(market, 0.0, np.eye(market.n))
    weights = {}
    for i, j in pairs:
        counts = leave_out_count(prob, [i, j])
        exactly = counts[:, p - 1] if p - 1 < counts.shape[-1] else np.zeros(counts.shape[0])
        weights[(i, j)] = float(kernel.rule.apply(exactly * g[:, i] * g[:, j]))
    return weights


def drift_fptd(p, market: MarketState, copula: CopulaSpec, betas, spread_corr, n_nodes=None) -> DriftReport:
    """
    First-p-to-default drift: pair term (1 - R)/2 [rho_i' rho_j (beta_i^2 + beta_j^2) - 2 beta_i beta_j r_ij] A*_ij.
    """
    recovery = market.common_recovery()
    beta, corr, _ = _pair_inputs(market, betas, spread_corr)
    weights = a_star(p, market, copula, n_nodes)
    loadings = copula.loading_matrix()
    asset_corr = loadings @ loadings.T
    pair_terms = {
        (i, j): 0.5
        * (1 - recovery)
        * (asset_corr[i, j] * (beta[i] ** 2 + beta[j] ** 2) - 2 * beta[i] * beta[j] * corr[i, j])
        * a
        for (i, j), a in weights.items()
    }
    return DriftReport.from_terms(pair_terms, a_star=weights)


@dataclass(frozen=True)
class ReplicationResidual:
    max_residual: float
    pair: tuple
    survival: tuple
    x: float


def check_replication_pde(kernel, vols, spread_corr, q_grid, x_grid=None) -> ReplicationResidual:
    """
    Largest |2 s_i s_j r_ij dp_i/dQ dp_j/dQ f_X - s_i^2 dp_j/dx chi_i - s_j^2 dp_i/dx chi_j| over a grid.
    Parameters:
        kernel - one-factor conditional kernel
        vols - volatilities per name, or a function of the survival probability vector
        spread_corr - correlation matrix, or a function of the survival probability vector
        q_grid - iterable of survival probability vectors
        x_grid - factor values, defaults to the quadrature nodes of the kernel
    """
    x = kernel.rule.nodes if x_grid is None else np.asarray(x_grid, dtype=float)
    worst = ReplicationResidual(0.0, (), (), float("nan"))
    for q in q_grid:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        sigma = np.broadcast_to(np.asarray(vols(q) if callable(vols) else vols, dtype=float), q.shape)
        corr = np.asarray(spread_corr(q) if callable(spread_corr) else spread_corr, dtype=float)
        dp = kernel.dp_dq(q, x)
        dpx = kernel.dp_dx(q, x)
        chi = kernel.chi(q, x)
        f = kernel.density(x)
        for i in range(q.size):
            for j in range(i + 1, q.size):
                residual = np.abs(
                    2 * sigma[i] * sigma[j] * corr[i, j] * dp[:, i] * dp[:, j] * f
                    - sigma[i] ** 2 * dpx[:, j] * chi[:, i]
                    - sigma[j] ** 2 * dpx[:, i] * chi[:, j]
                )
                k = int(np.nanargmax(residual))
                if residual[k] > worst.max_residual:
                    worst = ReplicationResidual(float(residual[k]), (i, j), tuple(q), float(x[k]))
    return worst
