"""
Delta hedging of basket positions along simulated survival-probability paths, and the
empirical break-even correlation: the flat pricing correlation at which the hedged P&L vanishes.

The basket and the CDS are upfront marks: the CDS of name i is worth (1 - Q_i)(1 - R_i), so that
dCDS_i = -dQ_i (1 - R_i). Hedge ratios are held in CDS units, h_i = -(dV/dQ_i) / (1 - R_i), and the
cash account earns no interest.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .breakeven import breakeven_flat_batch
from .copula import kernel_for
from .dynamics import PathSet
from .errors import DomainError, PricingError, ShapeError
from .model import BasketPayoff, CopulaSpec, DynamicsSpec
from .pricing import (
    conditional_default_count,
    conditional_matrices,
    expected_payoff,
    first_differences,
    leave_out_count,
)

logger = logging.getLogger(__name__)

CANDIDATE_RHO2 = np.round(np.arange(20) * 0.05, 2)  # 0% to 95%
DEFAULT_WINDOW = 6
SMOOTHING_DECAY = 0.3
SMOOTHING_LOOKBACK = 3
_CHUNK_ELEMENTS = 1 << 21


@dataclass(frozen=True, eq=False)
class HedgeLedger:
    """
    Per path and grid time: basket value, dV/dQ, hedge ratios, CDS marks and the cash account.
    pnl[:, m] is the P&L of the hedged position over (t_m, t_m+1].
    """

    times: np.ndarray
    values: np.ndarray
    deltas: np.ndarray
    hedge_ratios: np.ndarray
    cds: np.ndarray
    cash: np.ndarray
    pnl: np.ndarray

    @property
    def cumulative_pnl(self):
        return np.concatenate([np.zeros((self.pnl.shape[0], 1)), np.cumsum(self.pnl, axis=1)], axis=1)

    @property
    def total_pnl(self):
        return self.pnl.sum(axis=1)

    def portfolio_value(self):
        """Long basket, short hedge_ratios CDS, plus cash; equals the cumulative P&L."""
        return self.values - np.sum(self.hedge_ratios * self.cds, axis=-1) + self.cash

    def financing_gap(self):
        """Largest deviation between the portfolio value and the cumulative P&L."""
        return float(np.max(np.abs(self.portfolio_value() - self.cumulative_pnl)))

    def window_pnl(self, window=DEFAULT_WINDOW):
        """Rolling sums of window consecutive P&L increments, shape (paths, steps - window + 1)."""
        if not 1 <= window <= self.pnl.shape[1]:
            raise DomainError(f"Window must be in 1..{self.pnl.shape[1]}, got {window}")
        c = np.concatenate([np.zeros((self.pnl.shape[0], 1)), np.cumsum(self.pnl, axis=1)], axis=1)
        return c[:, window:] - c[:, :-window]


def _count_marks(payoffs, p, dp, weights):
    """Values and dV/dQ of several count payoffs sharing one default-count distribution per node."""
    n = p.shape[-1]
    dist = conditional_default_count(p)
    left_out = [leave_out_count(p, [i]) for i in range(n)]
    out = []
    for payoff in payoffs:
        value = (dist @ payoff.count_values) @ weights
        dg = np.diff(payoff.count_values)
        diffs = np.stack([counts @ dg for counts in left_out], axis=-1)
        out.append((value, np.einsum("bmn,m->bn", diffs * dp, weights)))
    return out


def _table_marks(payoffs, p, dp, weights):
    out = []
    for payoff in payoffs:
        value = expected_payoff(payoff, p) @ weights
        out.append((value, np.einsum("bmn,m->bn", first_differences(payoff, p) * dp, weights)))
    return out


def mark_batch(payoffs, kernel, survival):
    """
    Prices and dV/dQ of each payoff for a batch of survival-probability vectors of shape (B, n).
    Returns a list of (values (B,), deltas (B, n)) in payoff order.
    """
    survival = np.atleast_2d(survival)
    batch, n = survival.shape
    per_row = kernel.rule.size * (n + 1) * (n + 1)
    chunk = max(1, _CHUNK_ELEMENTS // per_row)
    marks = _count_marks if all(payoff.is_count for payoff in payoffs) else _table_marks
    values = [np.empty(batch) for _ in payoffs]
    deltas = [np.empty((batch, n)) for _ in payoffs]
    for start in range(0, batch, chunk):
        rows = slice(start, start + chunk)
        p, dp = conditional_matrices(kernel, survival[rows])
        for k, (v, d) in enumerate(marks(payoffs, p, dp, kernel.rule.weights)):
            values[k][rows], deltas[k][rows] = v, d
    return list(zip(values, deltas))


def _ledger(times, survival, values, deltas, recovery):
    hedge = -deltas / (1 - recovery)
    cds = (1 - survival) * (1 - recovery)
    d_cds = np.diff(cds, axis=1)
    pnl = np.diff(values, axis=1) - np.sum(hedge[:, :-1] * d_cds, axis=-1)
    # cash starts at -V0 + h0 CDS0 and collects (h_new - h_old) CDS at every rebalancing
    rebalance = np.sum(np.diff(hedge, axis=1) * cds[:, 1:], axis=-1)
    cash0 = -values[:, 0] + np.sum(hedge[:, 0] * cds[:, 0], axis=-1)
    cash = np.concatenate([cash0[:, None], cash0[:, None] + np.cumsum(rebalance, axis=1)], axis=1)
    return HedgeLedger(times, values, deltas, hedge, cds, cash, pnl)


def _check_inputs(paths, payoffs, recovery):
    for payoff in payoffs:
        if payoff.n != paths.n:
            raise ShapeError(f"Payoff on {payoff.n} names does not match paths of {paths.n} names")
    recovery = np.broadcast_to(np.asarray(recovery, dtype=float), (paths.n,))
    if np.any(~((recovery >= 0) & (recovery < 1))):
        raise DomainError(f"Recovery rates must be in [0, 1), got {recovery}")
    return recovery


def hedge_ledgers(paths: PathSet, payoffs, copula: CopulaSpec, recovery=0.0, n_nodes=None):
    """One HedgeLedger per payoff, all hedged under the same pricing copula with daily rebalancing."""
    payoffs = list(payoffs)
    recovery = _check_inputs(paths, payoffs, recovery)
    kernel = kernel_for(copula, n_nodes)
    shape = (paths.n_paths, paths.times.size)
    values = [np.empty(shape) for _ in payoffs]
    deltas = [np.empty(shape + (paths.n,)) for _ in payoffs]
    for m in range(paths.times.size):
        try:
            marks = mark_batch(payoffs, kernel, paths.survival[:, m])
        except (DomainError, FloatingPointError) as exc:
            raise PricingError(str(exc), m) from exc
        for k, (v, d) in enumerate(marks):
            if not np.all(np.isfinite(v)):
                raise PricingError("Basket value is not finite", m)
            values[k][:, m], deltas[k][:, m] = v, d
    return [_ledger(paths.times, paths.survival, v, d, recovery) for v, d in zip(values, deltas)]


def run_hedge(paths: PathSet, payoff: BasketPayoff, copula: CopulaSpec, recovery=0.0, n_nodes=None) -> HedgeLedger:
    """Delta-hedge one basket along every path, rebalancing at each grid time."""
    ledger = hedge_ledgers(paths, [payoff], copula, recovery, n_nodes)[0]
    logger.debug("Hedged %s over %d paths: mean P&L %.3g", payoff.kind.value, paths.n_paths, ledger.total_pnl.mean())
    return ledger


@dataclass(frozen=True, eq=False)
class PnlGrid:
    """P&L increments pnl[payoff, candidate, path, step] for a grid of flat pricing correlations."""

    candidates: np.ndarray
    payoffs: tuple
    pnl: np.ndarray


def hedge_pnl_grid(paths: PathSet, payoffs, candidates=CANDIDATE_RHO2, recovery=0.0, n_nodes=None) -> PnlGrid:
    """Hedged P&L of every payoff for every candidate flat rho^2 (loading sqrt(rho^2) for all names)."""
    payoffs = tuple(payoffs)
    candidates = np.asarray(candidates, dtype=float)
    if np.any(candidates < 0) or np.any(candidates >= 1) or np.any(np.diff(candidates) <= 0):
        raise DomainError(f"Candidate correlations must increase within [0, 1), got {candidates}")
    pnl = np.empty((len(payoffs), candidates.size, paths.n_paths, paths.n_steps))
    for c, rho2 in enumerate(candidates):
        copula = CopulaSpec.flat(paths.n, math.sqrt(rho2))
        for k, ledger in enumerate(hedge_ledgers(paths, payoffs, copula, recovery, n_nodes)):
            pnl[k, c] = ledger.pnl
        logger.debug("Candidate rho2 = %.2f done", rho2)
    return PnlGrid(candidates, payoffs, pnl)


def _zero_crossing(candidates, values):
    """Linear interpolation of the first sign change of values along the candidates, NaN if none."""
    if not np.all(np.isfinite(values)):
        return np.nan
    exact = np.flatnonzero(values == 0)
    if exact.size:
        return float(candidates[exact[0]])
    change = np.flatnonzero(np.sign(values[:-1]) != np.sign(values[1:]))
    if not change.size:
        return np.nan
    k = change[0]
    v0, v1 = values[k], values[k + 1]
    return float(candidates[k] + (candidates[k + 1] - candidates[k]) * v0 / (v0 - v1))


def empirical_breakeven(pnl, candidates=CANDIDATE_RHO2, window=None):
    """
    Break-even rho^2 per path and window from P&L increments pnl[candidate, path, step].
    window=None uses the whole horizon (one value per path); windows without a sign change are NaN.
    """
    pnl = np.asarray(pnl, dtype=float)
    candidates = np.asarray(candidates, dtype=float)
    if pnl.ndim != 3 or pnl.shape[0] != candidates.size:
        raise ShapeError(f"P&L must have shape ({candidates.size}, paths, steps), got {pnl.shape}")
    if window is None:
        sums = pnl.sum(axis=2, keepdims=True)
    else:
        if not 1 <= window <= pnl.shape[2]:
            raise DomainError(f"Window must be in 1..{pnl.shape[2]}, got {window}")
        c = np.concatenate([np.zeros(pnl.shape[:2] + (1,)), np.cumsum(pnl, axis=2)], axis=2)
        sums = c[:, :, window:] - c[:, :, :-window]
    out = np.empty(sums.shape[1:])
    for path, w in np.ndindex(*out.shape):
        out[path, w] = _zero_crossing(candidates, sums[:, path, w])
    return out


@dataclass(frozen=True)
class BreakevenSummary:
    mean: float
    std_error: float
    n_valid: int
    n_missing: int


def breakeven_summary(series) -> BreakevenSummary:
    """Average of the available break-even values; missing ones are skipped and counted."""
    values = np.asarray(series, dtype=float).ravel()
    valid = values[np.isfinite(values)]
    if not valid.size:
        return BreakevenSummary(np.nan, np.nan, 0, values.size)
    std_error = float(valid.std(ddof=1) / np.sqrt(valid.size)) if valid.size > 1 else np.nan
    return BreakevenSummary(float(valid.mean()), std_error, int(valid.size), int(values.size - valid.size))


def smooth_breakeven(series, decay=SMOOTHING_DECAY, lookback=SMOOTHING_LOOKBACK):
    """
    Weighted average of the current and lookback previous values with weights exp(-decay k),
    renormalized over the values present. Missing inputs are NaN; an all-missing window gives NaN.
    """
    values = np.asarray(series, dtype=float)
    weights = np.exp(-decay * np.arange(lookback + 1))
    out = np.full(values.shape, np.nan)
    for t in range(values.size):
        past = values[max(0, t - lookback) : t + 1][::-1]
        w = weights[: past.size]
        present = np.isfinite(past)
        if present.any():
            out[t] = np.sum(w[present] * past[present]) / np.sum(w[present])
    return out


def instantaneous_breakeven_path(paths: PathSet, orders, spec: DynamicsSpec, stride=1, n_nodes=None):
    """
    Theoretical flat break-even rho^2 of first-p-to-default baskets at every stride-th grid time of
    every path, with betas sigma_bar xi(t) of the dynamics.
    Returns:
        times, rho2[order, path, time] - NaN where the drift has no root
    """
    if spec.n != paths.n:
        raise ShapeError(f"Dynamics on {spec.n} names do not match paths of {paths.n} names")
    orders = np.atleast_1d(np.asarray(orders, dtype=int))
    steps = np.arange(0, paths.times.size, stride)
    out = np.empty((orders.size, paths.n_paths, steps.size))
    for k, m in enumerate(steps):
        t = float(paths.times[m])
        betas = spec.betas(t)
        out[:, :, k] = breakeven_flat_batch(orders, paths.survival[:, m], betas, spec.spread_corr, n_nodes=n_nodes)
    logger.debug("Instantaneous break-even on %d paths and %d times", paths.n_paths, steps.size)
    return paths.times[steps], out
