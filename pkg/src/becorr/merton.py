"""
Structural bridge: names default when A_iT = integral of psi_i dW_i ends below a threshold.
The survival probabilities of this model follow the replication-consistent dynamics with
beta_it = psi_i(t) / sqrt(integral_t^T psi_i^2), and the Gaussian copula prices stay martingales.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .common import frozen_array, norm_cdf, norm_isf
from .dynamics import path_normals
from .errors import DomainError, ShapeError
from .model import CopulaFamily, CopulaSpec, MarketState

logger = logging.getLogger(__name__)

unit_psi = lambda u: 1.0


def _square_integral(func, t0, t1):
    value, _ = quad(lambda u: func(u) ** 2, t0, t1, limit=200)
    return value


def merton_power_psi(sigma_bar, maturity):
    """psi(t) = (1 - t/T)^(sigma_bar^2 T / 2 - 1/2), whose beta is sigma_bar / sqrt(1 - t/T)."""
    exponent = 0.5 * sigma_bar**2 * maturity - 0.5
    return lambda u: (1 - u / maturity) ** exponent


def merton_beta_from_psi(psi, t, maturity):
    """beta_t = psi(t) / sqrt(integral_t^T psi^2) for each t in [0, T)."""
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0) or np.any(times >= maturity):
        raise DomainError(f"Times must lie in [0, {maturity}), got {t}")
    out = np.empty(times.shape)
    for k, time in enumerate(times):
        mass = _square_integral(psi, time, maturity)
        if not mass > 0:
            raise DomainError(f"Integral of psi^2 over [{time}, {maturity}] is zero")
        out[k] = psi(time) / np.sqrt(mass)
    return float(out[0]) if np.ndim(t) == 0 else out


def merton_psi_from_beta(beta, t, constant=1.0):
    """
    psi_t = C beta_t exp(-1/2 integral_0^t beta^2), the inverse of merton_beta_from_psi up to the constant C.
    The integral is accumulated piecewise over the sorted times.
    """
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise DomainError(f"Times must be non-negative, got {t}")
    order = np.argsort(times)
    cumulative = np.empty(times.shape)
    running, previous = 0.0, 0.0
    for k in order:
        running += _square_integral(beta, previous, times[k])
        previous = times[k]
        cumulative[k] = running
    out = constant * np.array([beta(time) for time in times]) * np.exp(-0.5 * cumulative)
    return float(out[0]) if np.ndim(t) == 0 else out


def merton_asset_correlation(psi_i, psi_j, rho_ij, maturity):
    """Corr(A_iT, A_jT) = rho_ij integral psi_i psi_j / sqrt(integral psi_i^2 integral psi_j^2)."""
    mass_i = _square_integral(psi_i, 0.0, maturity)
    mass_j = _square_integral(psi_j, 0.0, maturity)
    if not (mass_i > 0 and mass_j > 0):
        raise DomainError("psi functions must have positive mass on [0, T]")
    cross, _ = quad(lambda u: psi_i(u) * psi_j(u), 0.0, maturity, limit=200)
    return rho_ij * cross / np.sqrt(mass_i * mass_j)


@dataclass(frozen=True, eq=False)
class MertonSpec:
    """
    Names default when integral_0^T psi_i dW_i <= threshold_i, with W_i = theta_i W + sqrt(1 - theta_i^2) W*_i.
    """

    psi: tuple
    thresholds: np.ndarray
    loadings: np.ndarray
    maturity: float
    masses: np.ndarray = field(init=False)

    def __post_init__(self):
        thresholds = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        loadings = np.atleast_1d(np.asarray(self.loadings, dtype=float))
        if len(self.psi) != thresholds.size or loadings.shape != thresholds.shape:
            raise ShapeError("psi functions, thresholds and loadings must have one entry per name")
        if np.any(~(np.abs(loadings) < 1)):
            raise DomainError(f"Common-factor loadings must satisfy |theta| < 1, got {loadings}")
        masses = np.array([_square_integral(psi, 0.0, self.maturity) for psi in self.psi])
        if np.any(~(masses > 0)):
            raise DomainError("psi functions must have positive mass on [0, T]")
        object.__setattr__(self, "psi", tuple(self.psi))
        object.__setattr__(self, "thresholds", frozen_array(thresholds))
        object.__setattr__(self, "loadings", frozen_array(loadings))
        object.__setattr__(self, "masses", frozen_array(masses))

    @classmethod
    def from_market(cls, market: MarketState, loadings, psi=None):
        """Thresholds matching the initial survival probabilities; psi defaults to 1."""
        if market.time != 0:
            raise DomainError("Structural thresholds are set from a market at time 0")
        psi = tuple(psi) if psi is not None else (unit_psi,) * market.n
        masses = np.array([_square_integral(f, market.time, market.maturity) for f in psi])
        thresholds = np.sqrt(masses) * norm_isf(market.survival)
        return cls(psi, thresholds, loadings, market.maturity)

    @property
    def n(self):
        return self.thresholds.size

    def remaining_mass(self, i, t):
        return _square_integral(self.psi[i], t, self.maturity)


def merton_survival(spec: MertonSpec, partial, t):
    """
    Survival probabilities Q_it = Phi((A_it - threshold_i) / sqrt(integral_t^T psi_i^2)) for the
    partial integrals A_it (shape (..., n)).
    """
    partial = np.asarray(partial, dtype=float)
    if partial.shape[-1] != spec.n:
        raise ShapeError(f"Expected {spec.n} partial integrals, got shape {partial.shape}")
    remaining = np.array([spec.remaining_mass(i, t) for i in range(spec.n)])
    return norm_cdf((partial - spec.thresholds) / np.sqrt(remaining))


@dataclass(frozen=True, eq=False)
class MartingaleReport:
    times: np.ndarray
    mean: np.ndarray
    std_error: np.ndarray
    initial: np.ndarray
    max_z_score: float
    slope: np.ndarray
    slope_std_error: np.ndarray

    @property
    def passed(self):
        """Means within 4 standard errors of the start, slopes within 2."""
        slope_ok = np.all(np.abs(self.slope) <= 2 * self.slope_std_error + 1e-15)
        return bool(self.max_z_score <= 4 and slope_ok)


def check_conditional_martingale(copula: CopulaSpec, market: MarketState, grid, n_paths, seed) -> MartingaleReport:
    """
    Simulates W_t and the asset values A_jt = rho_j W_t + sqrt(1 - rho_j^2) W*_jt of the psi = 1 model and
    evaluates p_{j,t|x} at x = W_T - W_t, i.e.
    Phi((c_j - A_jt - rho_j (W_T - W_t)) / (sqrt(1 - rho_j^2) sqrt(T - t))) with c_j = sqrt(T) Phi_bar^-1(Q_j0).
    These conditional probabilities must be martingales given the terminal factor value.
    """
    if copula.family != CopulaFamily.GAUSS_1F:
        raise DomainError("Conditional martingale check needs a one-factor Gaussian copula")
    if copula.n != market.n:
        raise ShapeError(f"Copula on {copula.n} names does not match a market of {market.n} names")
    times = np.asarray(grid, dtype=float)
    T = market.maturity
    if times[0] != 0 or np.any(np.diff(times) <= 0) or times[-1] >= T:
        raise DomainError(f"Grid must start at 0, increase and stay before maturity {T}")
    spec = MertonSpec.from_market(market, copula.loadings)
    rho, c = spec.loadings, spec.thresholds
    idio = np.sqrt(1 - rho**2)

    knots = np.append(times, T)
    normals = path_normals(seed, n_paths, knots.size - 1, market.n + 1)
    increments = normals * np.sqrt(np.diff(knots))[None, :, None]
    brownian = np.concatenate([np.zeros((n_paths, 1, market.n + 1)), np.cumsum(increments, axis=1)], axis=1)
    w, w_star = brownian[:, :, :1], brownian[:, :, 1:]
    factor_left = w[:, -1:] - w[:, :-1]  # W_T - W_t at each grid time
    asset = rho * w[:, :-1] + idio * w_star[:, :-1]
    tau = (T - times)[None, :, None]
    p = norm_cdf((c - asset - rho * factor_left) / (idio * np.sqrt(tau)))

    initial = 1 - market.survival
    mean = p.mean(axis=0)
    std_error = p.std(axis=0, ddof=1) / np.sqrt(n_paths)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std_error > 0, np.abs(mean - initial) / std_error, 0.0)
    centered = times - times.mean()
    slopes = np.tensordot(centered, p - p.mean(axis=1, keepdims=True), axes=([0], [1])) / (centered @ centered)
    slope = slopes.mean(axis=0)
    slope_std_error = slopes.std(axis=0, ddof=1) / np.sqrt(n_paths)
    logger.debug("Conditional martingale check: max z-score %.3g", float(np.max(z)))
    return MartingaleReport(times, mean, std_error, initial, float(np.max(z)), slope, slope_std_error)
