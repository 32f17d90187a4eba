"""
Monte Carlo paths of survival probabilities.

Exact scheme: under dQ = sigma_bar xi(t) phi(Phi^-1(Q)) dW the transform Z = Phi^-1(Q) solves the linear equation
dZ = sigma_bar xi dW + 1/2 sigma_bar^2 xi^2 Z dt, sampled without discretization error step by step.
Euler scheme: Euler-Maruyama directly in Q with clamping.
Clayton scheme: Euler on dQ_i = sigma_i (beta_i(Q_i) dZ + sqrt(1 - beta_i(Q_i)^2) dZ*_i).
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from .common import correlation_factor, frozen_array, norm_cdf, norm_ppf
from .errors import DomainError, ShapeError
from .model import DynamicsSpec, MarketState

logger = logging.getLogger(__name__)

Q_FLOOR = 1e-10
Q_CAP = 1 - 1e-10
CLAMP_WARNING_RATE = 0.01
PATH_COLUMNS = ["path", "step", "time", "name", "survival_prob"]


class Scheme(str, Enum):
    EXACT_Z = "exact_z"
    EULER = "euler"
    CLAYTON = "clayton"


@dataclass(frozen=True, eq=False)
class PathSet:
    """
    Simulated survival probabilities, survival[path, step, name] at times[step].
    times[0] is the valuation time of the initial market and times[-1] < maturity.
    """

    times: np.ndarray
    survival: np.ndarray
    names: tuple
    maturity: float
    seed: int
    scheme: Scheme
    clamp_count: int = 0

    def __post_init__(self):
        survival = np.asarray(self.survival, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if survival.ndim != 3 or survival.shape[1:] != (times.size, len(self.names)):
            raise ShapeError(
                f"Survival paths must have shape (paths, {times.size}, {len(self.names)}), got {survival.shape}"
            )
        object.__setattr__(self, "times", frozen_array(times))
        object.__setattr__(self, "survival", frozen_array(survival))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "scheme", Scheme(self.scheme))

    @property
    def n_paths(self):
        return self.survival.shape[0]

    @property
    def n_steps(self):
        return self.times.size - 1

    @property
    def n(self):
        return len(self.names)

    @property
    def clamp_rate(self):
        total = self.n_paths * self.n_steps * self.n
        return self.clamp_count / total if total else 0.0

    def market(self, path, step, recovery=0.0):
        """MarketState of one path at one grid time."""
        return MarketState(self.names, self.maturity, self.survival[path, step], recovery, float(self.times[step]))

    def to_frame(self):
        """Long table with one row per (path, step, name)."""
        paths, steps, names = np.meshgrid(
            np.arange(self.n_paths), np.arange(self.times.size), np.arange(self.n), indexing="ij"
        )
        return pd.DataFrame(
            {
                "path": paths.ravel(),
                "step": steps.ravel(),
                "time": self.times[steps.ravel()],
                "name": np.asarray(self.names, dtype=object)[names.ravel()],
                "survival_prob": self.survival.ravel(),
            },
            columns=PATH_COLUMNS,
        )

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, maturity, seed=None, scheme=Scheme.EXACT_Z):
        missing = [column for column in PATH_COLUMNS if column not in frame.columns]
        if missing:
            raise ShapeError(f"Path table misses columns {missing}")
        names = tuple(pd.unique(frame["name"].astype(str)))
        times = frame.groupby("step")["time"].first().sort_index().to_numpy(dtype=float)
        table = frame.assign(name=frame["name"].astype(str)).set_index(["path", "step", "name"])["survival_prob"]
        if table.index.duplicated().any():
            raise ShapeError("Path table has duplicate (path, step, name) rows")
        n_paths = frame["path"].nunique()
        full = pd.MultiIndex.from_product([sorted(frame["path"].unique()), range(times.size), names])
        values = table.reindex(full).to_numpy(dtype=float)
        if np.isnan(values).any():
            raise ShapeError("Path table is not a complete (path, step, name) grid")
        return cls(times, values.reshape(n_paths, times.size, len(names)), names, float(maturity), seed, scheme)


def time_grid(start, dt, n_steps, maturity):
    """start, start + dt, ..., start + n_steps dt; the last time must stay before maturity."""
    times = start + dt * np.arange(n_steps + 1)
    return _check_grid(times, start, maturity)


def _check_grid(grid, start, maturity):
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ShapeError("Time grid needs at least two points")
    if not np.isclose(times[0], start, rtol=0, atol=1e-12):
        raise DomainError(f"Time grid must start at the valuation time {start}, got {times[0]}")
    if np.any(np.diff(times) <= 0):
        raise DomainError("Time grid must be strictly increasing")
    if times[-1] >= maturity:
        raise DomainError(f"Time grid must stay before maturity {maturity}, got {times[-1]}")
    return times


def _check_market(n, market):
    if market.n != n:
        raise ShapeError(f"Dynamics on {n} names do not match a market of {market.n} names")
    if np.any(market.defaulted):
        raise DomainError("Simulations start from a market without defaulted names")


def path_normals(seed, n_paths, n_steps, width):
    """Standard normals (paths, steps, width); path k always draws from the same child stream."""
    out = np.empty((n_paths, n_steps, width))
    for path in range(n_paths):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(path,)))
        out[path] = rng.standard_normal((n_steps, width))
    return out


def _clamp(q):
    clamped = np.clip(q, Q_FLOOR, Q_CAP)
    return clamped, int(np.count_nonzero(clamped != q))


def _report_clamps(clamp_count, n_values, scheme):
    rate = clamp_count / n_values if n_values else 0.0
    if rate > CLAMP_WARNING_RATE:
        warnings.warn(f"{scheme.value} scheme clamped {rate:.2%} of the simulated survival probabilities")
    elif clamp_count:
        logger.debug("%s scheme clamped %d values", scheme.value, clamp_count)


def exact_step_covariance(sigma_bar, spread_corr, I):
    """
    Covariance of the Gaussian increments of Z over a step with I = integral of xi^2:
    r_ij 2 s_i s_j / (s_i^2 + s_j^2) (exp((s_i^2 + s_j^2) I / 2) - 1), and r_ij s_i s_j I when s_i = s_j = 0.
    """
    s = np.asarray(sigma_bar, dtype=float)
    total = s[:, None] ** 2 + s[None, :] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(total > 0, 2 * np.expm1(0.5 * total * I) / total, I)
    return np.asarray(spread_corr, dtype=float) * np.outer(s, s) * factor


def terminal_z_variance(spec: DynamicsSpec, t, start=0.0):
    """
    Var(Z_t | Z_start) = exp(sigma_bar^2 integral of xi^2) - 1 per name; unbounded as t -> T for
    terminating schedules.
    """
    return np.expm1(spec.sigma_bar**2 * spec.xi.integral(start, t))


def simulate_exact(spec: DynamicsSpec, market: MarketState, grid, n_paths, seed) -> PathSet:
    """
    Exact transition of Z = Phi^-1(Q) between grid times. A nonzero drift mu is added as an
    Euler step in Q after each exact step.
    """
    _check_market(spec.n, market)
    times = _check_grid(grid, market.time, spec.maturity)
    n_steps = times.size - 1
    normals = path_normals(seed, n_paths, n_steps, spec.n)
    survival = np.empty((n_paths, times.size, spec.n))
    survival[:, 0] = market.survival
    z = np.broadcast_to(norm_ppf(market.survival), (n_paths, spec.n)).copy()
    s2 = spec.sigma_bar**2
    clamp_count = 0
    for m in range(n_steps):
        t0, t1 = times[m], times[m + 1]
        I = float(spec.xi.integral(t0, t1))
        L = correlation_factor(exact_step_covariance(spec.sigma_bar, spec.spread_corr, I))
        z = np.exp(0.5 * s2 * I) * z + normals[:, m] @ L.T
        q = norm_cdf(z)
        if spec.mu is not None:
            q = q + spec.drift(t0, survival[:, m]) * (t1 - t0)
        q, clamped = _clamp(q)
        clamp_count += clamped
        if clamped or spec.mu is not None:
            z = norm_ppf(q)
        survival[:, m + 1] = q
    _report_clamps(clamp_count, n_paths * n_steps * spec.n, Scheme.EXACT_Z)
    logger.debug("Exact scheme: %d paths, %d steps, %d names", n_paths, n_steps, spec.n)
    return PathSet(times, survival, market.names, spec.maturity, seed, Scheme.EXACT_Z, clamp_count)


def simulate_euler(spec: DynamicsSpec, market: MarketState, grid, n_paths, seed) -> PathSet:
    """Euler-Maruyama in Q with clamping to [1e-10, 1 - 1e-10]; the clamp count is kept in the result."""
    _check_market(spec.n, market)
    times = _check_grid(grid, market.time, spec.maturity)
    n_steps = times.size - 1
    normals = path_normals(seed, n_paths, n_steps, spec.n)
    L = correlation_factor(spec.spread_corr)
    survival = np.empty((n_paths, times.size, spec.n))
    survival[:, 0] = market.survival
    clamp_count = 0
    for m in range(n_steps):
        t0, dt = times[m], times[m + 1] - times[m]
        q = survival[:, m]
        dw = np.sqrt(dt) * normals[:, m] @ L.T
        step = spec.vols(t0, q) * dw + spec.drift(t0, q) * dt
        survival[:, m + 1], clamped = _clamp(q + step)
        clamp_count += clamped
    _report_clamps(clamp_count, n_paths * n_steps * spec.n, Scheme.EULER)
    logger.debug("Euler scheme: %d paths, %d steps, %d names", n_paths, n_steps, spec.n)
    return PathSet(times, survival, market.names, spec.maturity, seed, Scheme.EULER, clamp_count)


def clayton_beta(theta, Q):
    """beta(Q) = sqrt(1 - (1 - Q)^theta), the loading of a name on the common driver."""
    q = np.asarray(Q, dtype=float)
    return np.sqrt(1 - (1 - q) ** theta)


def clayton_replication_vols(theta, sigma0, Q):
    """Volatilities sigma_0 (1 - Q) beta(Q) under which Clayton prices are martingales."""
    q = np.asarray(Q, dtype=float)
    return sigma0 * (1 - q) * clayton_beta(theta, q)


def clayton_spread_corr(theta, Q):
    """Instantaneous correlations beta_i(Q_i) beta_j(Q_j) with unit diagonal."""
    beta = clayton_beta(theta, np.atleast_1d(Q))
    corr = np.outer(beta, beta)
    np.fill_diagonal(corr, 1.0)
    return corr


def simulate_clayton(theta, sigma0, market: MarketState, grid, n_paths, seed) -> PathSet:
    """
    Euler scheme for the Clayton-consistent dynamics with one common Brownian motion Z and
    one idiosyncratic Z*_i per name.
    """
    if not theta > 0:
        raise DomainError(f"Clayton dependence parameter must be positive, got {theta}")
    if not sigma0 > 0:
        raise DomainError(f"Volatility level must be positive, got {sigma0}")
    _check_market(market.n, market)
    times = _check_grid(grid, market.time, market.maturity)
    n_steps, n = times.size - 1, market.n
    normals = path_normals(seed, n_paths, n_steps, n + 1)  # column 0 drives the common factor
    survival = np.empty((n_paths, times.size, n))
    survival[:, 0] = market.survival
    clamp_count = 0
    for m in range(n_steps):
        dt = times[m + 1] - times[m]
        q = survival[:, m]
        beta = clayton_beta(theta, q)
        dv = np.sqrt(dt) * (beta * normals[:, m, :1] + np.sqrt(1 - beta**2) * normals[:, m, 1:])
        survival[:, m + 1], clamped = _clamp(q + clayton_replication_vols(theta, sigma0, q) * dv)
        clamp_count += clamped
    _report_clamps(clamp_count, n_paths * n_steps * n, Scheme.CLAYTON)
    logger.debug("Clayton scheme: %d paths, %d steps, %d names", n_paths, n_steps, n)
    return PathSet(times, survival, market.names, market.maturity, seed, Scheme.CLAYTON, clamp_count)


def simulate(spec: DynamicsSpec, market: MarketState, grid, n_paths, seed, scheme=Scheme.EXACT_Z) -> PathSet:
    scheme = Scheme(scheme)
    if scheme == Scheme.EXACT_Z:
        return simulate_exact(spec, market, grid, n_paths, seed)
    if scheme == Scheme.EULER:
        return simulate_euler(spec, market, grid, n_paths, seed)
    raise ValueError(f"Unsupported scheme for replication-consistent dynamics: {scheme.value}")


def realized_z_correlation(paths: PathSet):
    """Sample correlation matrix of the Z = Phi^-1(Q) increments pooled over paths and steps."""
    dz = np.diff(norm_ppf(paths.survival), axis=1).reshape(-1, paths.n)
    return np.corrcoef(dz, rowvar=False)

