"""
Break-even correlations: the flat pricing correlation that zeroes the drift of a delta-hedged
first-p-to-default basket, its closed form for homogeneous baskets, and the break-even
correlation matrix implied by the spread dynamics.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .common import PSD_TOLERANCE, norm_cdf, norm_isf, norm_pdf, validate_correlation_matrix
from .drift import a_star, drift_fptd
from .errors import ConsistencyError, DomainError, ShapeError
from .model import BreakevenResult, CopulaSpec, MarketState
from .pricing import leave_out_count
from .quadrature import hermite_rule

BREAKEVEN_BRACKET = (1e-6, 0.99)
MAX_ITERATIONS = 80
RANK_TOLERANCE = 1e-10


def flat_drift(p, market: MarketState, rho2, betas, spread_corr, n_nodes=None):
    """Total first-p-to-default drift when every name is priced with loading sqrt(rho2)."""
    copula = CopulaSpec.flat(market.n, math.sqrt(rho2))
    return drift_fptd(p, market, copula, betas, spread_corr, n_nodes).total


def solve_breakeven_flat(
    p, market: MarketState, betas, spread_corr, bracket=BREAKEVEN_BRACKET, n_nodes=None
) -> BreakevenResult:
    """
    Flat correlation rho^2 at which the first-p-to-default drift vanishes.
    Brent's method on the bracket; without a sign change a non-converged result is returned.
    """
    lower, upper = bracket
    if not 0 <= lower < upper < 1:
        raise DomainError(f"Bracket must satisfy 0 <= a < b < 1, got {bracket}")
    drift = lambda rho2: flat_drift(p, market, rho2, betas, spread_corr, n_nodes)
    f_lower, f_upper = drift(lower), drift(upper)
    if f_lower == 0 and f_upper == 0:
        return BreakevenResult(np.nan, False, 0.0, 0, bracket, (f_lower, f_upper), "drift vanishes at both bracket ends")
    if f_lower == 0:
        return BreakevenResult(lower, True, 0.0, 0, bracket, (f_lower, f_upper), "root at lower bracket end")
    if f_lower * f_upper > 0:
        return BreakevenResult(
            np.nan, False, np.nan, 0, bracket, (f_lower, f_upper), "drift has the same sign at both bracket ends"
        )
    root, info = brentq(
        drift, lower, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=MAX_ITERATIONS, full_output=True
    )
    return BreakevenResult(
        float(root), bool(info.converged), drift(root), int(info.iterations), bracket, (f_lower, f_upper), info.flag
    )


def _pair_sums(betas, spread_corr):
    beta = np.asarray(betas, dtype=float)
    corr = np.asarray(spread_corr, dtype=float)
    if corr.shape != (beta.size, beta.size):
        raise ShapeError(f"Spread correlation must be {beta.size}x{beta.size}, got {corr.shape}")
    iu = np.triu_indices(beta.size, k=1)
    cross = beta[iu[0]] * beta[iu[1]] * corr[iu]
    squares = beta[iu[0]] ** 2 + beta[iu[1]] ** 2
    return cross, squares


def breakeven_weighted_closed_form(betas, spread_corr):
    """
    rho^2 = 2 sum_{i<j} beta_i beta_j r_ij / sum_{i<j} (beta_i^2 + beta_j^2).
    Exact for baskets with equal survival probabilities.
    """
    cross, squares = _pair_sums(betas, spread_corr)
    denominator = math.fsum(squares)
    if denominator == 0:
        raise DomainError("Break-even correlation is undefined when all betas are zero")
    return 2 * math.fsum(cross) / denominator


def breakeven_uniform(spread_corr):
    """Equal betas: the average pairwise spread correlation 2 / (n (n - 1)) sum_{i<j} r_ij."""
    corr = np.asarray(spread_corr, dtype=float)
    n = corr.shape[0]
    return 2 * math.fsum(corr[np.triu_indices(n, k=1)]) / (n * (n - 1))


def breakeven_weights(p, market: MarketState, rho2, betas, n_nodes=None):
    """
    A*_ij at the flat correlation rho2 and the normalized weights
    w_ij = A*_ij (beta_i^2 + beta_j^2) / sum A*_kl (beta_k^2 + beta_l^2),
    so that the break-even correlation is sum w_ij 2 beta_i beta_j r_ij / (beta_i^2 + beta_j^2).
    """
    beta = np.broadcast_to(np.asarray(betas, dtype=float), (market.n,))
    weights = a_star(p, market, CopulaSpec.flat(market.n, math.sqrt(rho2)), n_nodes)
    raw = {(i, j): a * (beta[i] ** 2 + beta[j] ** 2) for (i, j), a in weights.items()}
    total = math.fsum(raw.values())
    normalized = {pair: value / total for pair, value in raw.items()} if total > 0 else raw
    return weights, normalized


@dataclass(frozen=True, eq=False)
class BreakevenMatrix:
    sigma_tilde: np.ndarray
    factor_loadings: np.ndarray
    rank_p: int
    residual: float
    min_eigenvalue: float


def breakeven_matrix_entries(sigma_bar, spread_corr):
    """[r_ij 2 sigma_bar_i sigma_bar_j / (sigma_bar_i^2 + sigma_bar_j^2)] with unit diagonal."""
    s = np.asarray(sigma_bar, dtype=float)
    corr = np.asarray(spread_corr, dtype=float)
    if np.any(~(s > 0)):
        raise DomainError(f"Spread volatilities must be positive, got {s}")
    if corr.shape != (s.size, s.size):
        raise ShapeError(f"Spread correlation must be {s.size}x{s.size}, got {corr.shape}")
    factor = 2 * np.outer(s, s) / (s[:, None] ** 2 + s[None, :] ** 2)
    out = corr * factor
    np.fill_diagonal(out, 1.0)
    return out


def _principal_factors(target, rank, max_iterations=5000, tolerance=1e-15):
    """Loadings L (n x rank) whose products fit the off-diagonal of target (iterated principal axes)."""
    n = target.shape[0]
    communality = np.ones(n)
    loadings = np.zeros((n, rank))
    for _ in range(max_iterations):
        m = target.copy()
        np.fill_diagonal(m, communality)
        values, vectors = eigh(m)
        top = np.argsort(values)[::-1][:rank]
        loadings = vectors[:, top] * np.sqrt(np.clip(values[top], 0, None))
        updated = np.sum(loadings**2, axis=1)
        converged = np.max(np.abs(updated - communality)) < tolerance
        communality = updated
        if converged:
            break
    signs = np.where(loadings.sum(axis=0) < 0, -1.0, 1.0)
    return loadings * signs


def build_breakeven_matrix(sigma_bar, spread_corr, target_rank=None) -> BreakevenMatrix:
    """
    Break-even correlation matrix of the spread dynamics, optionally decomposed into rank-p loadings.
    Rows of the loadings are rescaled to stay strictly inside the unit ball.
    """
    sigma_tilde = breakeven_matrix_entries(sigma_bar, spread_corr)
    diagnostics = validate_correlation_matrix(sigma_tilde)
    if not diagnostics.accepted:
        raise ConsistencyError(
            f"Break-even matrix is not a correlation matrix (min eigenvalue {diagnostics.min_eigenvalue:.3g}); "
            "check the spread correlation"
        )
    eigenvalues = diagnostics.eigenvalues
    rank = int(np.sum(eigenvalues > RANK_TOLERANCE * eigenvalues.max()))
    loadings, residual = None, np.nan
    if target_rank is not None:
        if not 1 <= target_rank <= sigma_tilde.shape[0]:
            raise DomainError(f"Target rank must be in 1..{sigma_tilde.shape[0]}, got {target_rank}")
        loadings = _principal_factors(sigma_tilde, target_rank)
        norms = np.sqrt(np.sum(loadings**2, axis=1))
        too_long = norms >= 1
        loadings[too_long] *= ((1 - PSD_TOLERANCE) / norms[too_long])[:, None]
        fitted = loadings @ loadings.T
        off = ~np.eye(sigma_tilde.shape[0], dtype=bool)
        residual = float(np.max(np.abs(fitted - sigma_tilde)[off])) if off.any() else 0.0
    return BreakevenMatrix(sigma_tilde, loadings, rank, residual, diagnostics.min_eigenvalue)


def _flat_a_star(survival, rho, order, rule):
    """
    A*_ij per row for flat loadings rho and orders p (one each per row of survival, shape (R, n)).
    Returns an array of shape (R, n_pairs) in the order of the pairs (i, j), i < j.
    """
    s = norm_isf(survival)[:, None, :]
    c = np.sqrt(1 - rho**2)[:, None, None]
    d = (s - rho[:, None, None] * rule.nodes[None, :, None]) / c
    p, g = norm_cdf(d), norm_pdf(d) / c
    n = survival.shape[1]
    column = (order - 1)[:, None, None]
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            counts = np.concatenate([leave_out_count(p, [i, j]), np.zeros(p.shape[:2] + (1,))], axis=-1)
            exactly = np.take_along_axis(counts, np.minimum(column, counts.shape[-1] - 1), axis=-1)[..., 0]
            out.append((exactly * g[..., i] * g[..., j]) @ rule.weights)
    return np.stack(out, axis=-1)


def breakeven_flat_batch(
    orders, survival, betas, spread_corr, bracket=BREAKEVEN_BRACKET, n_nodes=None, tolerance=1e-13
):
    """
    Flat break-even rho^2 of first-p-to-default baskets for a batch of survival-probability vectors,
    by bisection run in parallel over orders and rows. Rows without a sign change on the bracket are NaN.
    Parameters:
        orders - orders p of the baskets
        survival - (B, n) survival probabilities
        betas - (n,) or (B, n) beta factors of the spread dynamics
        spread_corr - (n, n) spread correlation matrix
    Returns:
        array of shape (len(orders), B)
    """
    survival = np.atleast_2d(np.asarray(survival, dtype=float))
    batch, n = survival.shape
    orders = np.asarray(orders, dtype=int)
    if np.any(orders < 1) or np.any(orders > n):
        raise DomainError(f"Orders must be in 1..{n}, got {orders}")
    beta = np.broadcast_to(np.asarray(betas, dtype=float), (batch, n))
    corr = np.asarray(spread_corr, dtype=float)
    if corr.shape != (n, n):
        raise ShapeError(f"Spread correlation must be {n}x{n}, got {corr.shape}")
    rule = hermite_rule(n_nodes) if n_nodes else hermite_rule()
    first, second = np.triu_indices(n, k=1)
    squares = np.tile(beta[:, first] ** 2 + beta[:, second] ** 2, (orders.size, 1))
    cross = np.tile(2 * beta[:, first] * beta[:, second] * corr[first, second], (orders.size, 1))
    rows = np.tile(survival, (orders.size, 1))
    row_orders = np.repeat(orders, batch)

    def drift(rho2):  # (1 - R) / 2 dropped, it does not change the sign
        weights = _flat_a_star(rows, np.sqrt(rho2), row_orders, rule)
        return np.sum((rho2[:, None] * squares - cross) * weights, axis=-1)

    lower = np.full(rows.shape[0], float(bracket[0]))
    upper = np.full(rows.shape[0], float(bracket[1]))
    f_lower, f_upper = drift(lower), drift(upper)
    valid = (f_lower * f_upper <= 0) & ((f_lower != 0) | (f_upper != 0))
    while np.max(upper - lower) > tolerance:
        middle = 0.5 * (lower + upper)
        f_middle = drift(middle)
        left = f_lower * f_middle <= 0
        upper, lower = np.where(left, middle, upper), np.where(left, lower, middle)
        f_lower = np.where(left, f_lower, f_middle)
    return np.where(valid, 0.5 * (lower + upper), np.nan).reshape(orders.size, batch)
