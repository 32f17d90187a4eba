"""
Prices and deltas of European basket payoffs under a factor copula:
V = integral over x of sum_delta psi(delta) prod_i p_{i|x}^delta_i q_{i|x}^(1 - delta_i) f_X(x) dx.

Payoffs that depend on the number of defaults only go through the conditional
number-of-defaults recursion; other payoffs are contracted name by name against the payoff table.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .common import norm_cdf, norm_ppf
from .copula import kernel_for
from .errors import CapacityError, DomainError
from .model import MAX_GENERIC_NAMES, BasketPayoff, CopulaSpec, MarketState

_CHUNK_ELEMENTS = 1 << 22
BUMP_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class PriceResult:
    value: float
    deltas: np.ndarray
    n_nodes: int
    error_estimate: float


def conditional_default_count(p):
    """
    Distribution of the number of defaults given the factor, by sequential convolution of
    the Bernoulli(p_i) laws. p has shape (..., n); the result has shape (..., n + 1).
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[-1]
    dist = np.zeros(p.shape[:-1] + (n + 1,))
    dist[..., 0] = 1.0
    for i in range(n):
        pi = p[..., i : i + 1]
        prev = dist[..., : i + 1].copy()
        dist[..., : i + 1] = prev * (1 - pi)
        dist[..., 1 : i + 2] += prev * pi
    return dist


def leave_out_count(p, skip):
    """Distribution of the number of defaults among the names not listed in skip."""
    keep = [k for k in range(p.shape[-1]) if k not in set(skip)]
    return conditional_default_count(p[..., keep])


def contract_table(table, a, b):
    """
    Sum over all indicator vectors of table[delta] * prod_i (a_i if delta_i == 0 else b_i).
    a and b have shape (..., n); the table is ordered as delta_grid(n).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    lead, n = a.shape[:-1], a.shape[-1]
    flat_a, flat_b = a.reshape(-1, n), b.reshape(-1, n)
    out = np.empty(flat_a.shape[0])
    chunk = max(1, _CHUNK_ELEMENTS >> n)
    for start in range(0, flat_a.shape[0], chunk):
        ac, bc = flat_a[start : start + chunk], flat_b[start : start + chunk]
        t = np.broadcast_to(table, (ac.shape[0], table.size))
        for i in range(n - 1, -1, -1):  # trailing axis belongs to the last name
            t = t.reshape(ac.shape[0], -1, 2)
            t = t[:, :, 0] * ac[:, i : i + 1] + t[:, :, 1] * bc[:, i : i + 1]
        out[start : start + chunk] = t[:, 0]
    return out.reshape(lead)


def _require_table(payoff):
    if payoff.n > MAX_GENERIC_NAMES:
        raise CapacityError(
            f"Enumeration over {payoff.n} names exceeds {MAX_GENERIC_NAMES}; "
            "use the number-of-defaults recursion (price_fptd)"
        )
    return np.asarray(payoff.table)


def expected_payoff(payoff: BasketPayoff, p, use_recursion=None):
    """Conditional expectation of the payoff per node; p has shape (..., n)."""
    use_recursion = payoff.is_count if use_recursion is None else use_recursion
    if use_recursion:
        return conditional_default_count(p) @ payoff.count_values
    return contract_table(_require_table(payoff), 1 - p, p)


def first_differences(payoff: BasketPayoff, p, use_recursion=None):
    """E[psi | delta_i = 1] - E[psi | delta_i = 0] per node and name, shape (..., n)."""
    use_recursion = payoff.is_count if use_recursion is None else use_recursion
    n = p.shape[-1]
    out = np.empty(p.shape)
    if use_recursion:
        dg = np.diff(payoff.count_values)
        for i in range(n):
            out[..., i] = leave_out_count(p, [i]) @ dg
        return out
    table = _require_table(payoff)
    for i in range(n):
        a, b = 1 - p, p.copy()
        a[..., i], b[..., i] = -1.0, 1.0
        out[..., i] = contract_table(table, a, b)
    return out


def second_difference(payoff: BasketPayoff, p, i, j, use_recursion=None):
    """
    sum_delta psi(delta) (2 delta_i - 1)(2 delta_j - 1) prod_{k != i, j} p_k^delta_k q_k^(1 - delta_k) per node.
    """
    use_recursion = payoff.is_count if use_recursion is None else use_recursion
    if use_recursion:
        g = payoff.count_values
        d2g = g[2:] - 2 * g[1:-1] + g[:-2]
        return leave_out_count(p, [i, j]) @ d2g
    a, b = 1 - p, p.copy()
    a[..., [i, j]], b[..., [i, j]] = -1.0, 1.0
    return contract_table(_require_table(payoff), a, b)


def kernel_inputs(market: MarketState):
    """Survival probabilities safe to pass to a kernel, and the defaulted mask."""
    defaulted = np.asarray(market.defaulted)
    return np.where(defaulted, 0.5, market.survival), defaulted


def conditional_matrices(kernel, survival, defaulted=None):
    """
    p_{i|x} and dp_{i|x}/dQ_i at the kernel nodes. Defaulted names default with certainty
    and have no sensitivity.
    """
    p = kernel.p(survival)
    dp = kernel.dp_dq(survival)
    if defaulted is not None and np.any(defaulted):
        p = np.where(defaulted, 1.0, p)
        dp = np.where(defaulted, 0.0, dp)
    return p, dp


def _value_and_deltas(payoff, market, copula, n_nodes, with_deltas, use_recursion):
    kernel = kernel_for(copula, n_nodes)
    survival, defaulted = kernel_inputs(market)
    p, dp = conditional_matrices(kernel, survival, defaulted)
    value = float(kernel.rule.apply(expected_payoff(payoff, p, use_recursion)))
    deltas = None
    if with_deltas:
        diffs = first_differences(payoff, p, use_recursion)
        deltas = np.moveaxis(diffs * dp, -1, 0) @ kernel.rule.weights
    return value, deltas, kernel.rule.n_nodes


def _check_sizes(payoff, market, copula):
    if payoff.n != market.n:
        raise DomainError(f"Payoff on {payoff.n} names does not match a market of {market.n} names")
    if copula.n is not None and copula.n != market.n:
        raise DomainError(f"Copula on {copula.n} names does not match a market of {market.n} names")


def _price(payoff, market, copula, n_nodes, with_deltas, use_recursion):
    _check_sizes(payoff, market, copula)
    value, deltas, nodes = _value_and_deltas(payoff, market, copula, n_nodes, with_deltas, use_recursion)
    coarse, _, _ = _value_and_deltas(payoff, market, copula, max(nodes // 2, 1), False, use_recursion)
    return PriceResult(value, deltas, nodes, abs(value - coarse))


def price_generic(payoff: BasketPayoff, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """
    Price by enumeration of all 2^n indicator vectors (n <= 20), for any payoff kind.
    The valuation time enters only through the survival probabilities.
    """
    _require_table(payoff)
    return _price(payoff, market, copula, n_nodes, with_deltas, use_recursion=False)


def price_count(payoff: BasketPayoff, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """Price of a payoff g(N) of the number of defaults through the conditional recursion."""
    if not payoff.is_count:
        raise DomainError(f"Payoff of kind {payoff.kind.value} does not depend on the default count only")
    return _price(payoff, market, copula, n_nodes, with_deltas, use_recursion=True)


def price_fptd(p, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """First-p-to-default basket paying (1 - R) min(N, p); requires a common recovery rate."""
    payoff = BasketPayoff.fptd(market.n, p, market.common_recovery())
    return price_count(payoff, market, copula, n_nodes, with_deltas)


def price_stop_loss(p, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """Payoff (1 - R) 1(N <= p)."""
    payoff = BasketPayoff.stop_loss(market.n, p, market.common_recovery())
    return price_count(payoff, market, copula, n_nodes, with_deltas)


def price_tranche(attachment, detachment, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """Expected loss of an [attachment, detachment] tranche of an equally weighted basket."""
    payoff = BasketPayoff.tranche(market.n, attachment, detachment, market.common_recovery())
    return price_count(payoff, market, copula, n_nodes, with_deltas)


def price(payoff: BasketPayoff, market: MarketState, copula: CopulaSpec, n_nodes=None, with_deltas=True):
    """Price with the method suited to the payoff: recursion for count payoffs, enumeration otherwise."""
    if payoff.is_count:
        return price_count(payoff, market, copula, n_nodes, with_deltas)
    return price_generic(payoff, market, copula, n_nodes, with_deltas)


def digital_put_price(spot, strike, vol, tau, rate=0.0):
    """Lognormal digital put paying 1 if the underlying finishes below the strike."""
    if not (vol > 0 and tau > 0 and spot > 0 and strike > 0):
        raise DomainError("Digital put needs positive spot, strike, volatility and time to expiry")
    d2 = (np.log(spot / strike) + (rate - 0.5 * vol**2) * tau) / (vol * np.sqrt(tau))
    return float(np.exp(-rate * tau) * norm_cdf(-d2))


def price_worst_of_digital(puts, copula: CopulaSpec, n_nodes=None):
    """
    Worst-of digital put on n names from the individual digital put prices P_i:
    V = 1 - integral of prod_i (1 - Phi((Phi^-1(P_i) - rho_i' x) / sqrt(1 - |rho_i|^2))) phi(x) dx.
    """
    puts = np.atleast_1d(np.asarray(puts, dtype=float))
    if np.any(~((puts > 0) & (puts < 1))):
        raise DomainError(f"Digital put prices must be in (0, 1), got {puts}")
    if not copula.is_gaussian:
        raise DomainError("Worst-of digital pricing needs a Gaussian copula")
    kernel = kernel_for(copula, n_nodes)
    nodes = kernel.rule.nodes
    rho_x = nodes.reshape(nodes.shape[0], -1) @ kernel.loadings.T
    exercise = norm_cdf((norm_ppf(puts) - rho_x) / kernel.c)
    return float(1 - kernel.rule.apply(np.prod(1 - exercise, axis=-1)))


def deltas(
    payoff: BasketPayoff, market: MarketState, copula: CopulaSpec, mode="analytic", step=BUMP_STEP, n_nodes=None
):
    """
    dV/dQ_i per name. analytic differentiates under the integral, bump uses central differences
    with the given step (shrunk with a warning when Q +- step would leave (0, 1)).
    """
    if mode == "analytic":
        return price(payoff, market, copula, n_nodes).deltas
    if mode != "bump":
        raise ValueError(f"Unsupported delta mode: {mode}")
    value = lambda m: price(payoff, m, copula, n_nodes, with_deltas=False).value
    out = np.zeros(market.n)
    for i in np.flatnonzero(market.alive):
        q = market.survival[i]
        h = min(step, 0.5 * q, 0.5 * (1 - q))
        if h < step:
            warnings.warn(f"Bump step for {market.names[i]} shrunk to {h:.3g} to stay inside (0, 1)")
        up, down = market.survival.copy(), market.survival.copy()
        up[i], down[i] = q + h, q - h
        out[i] = (value(market.with_survival(up)) - value(market.with_survival(down))) / (2 * h)
    return out
