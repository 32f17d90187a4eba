"""
Domain types shared by all modules: market state, copula specification, basket payoffs,
survival-probability dynamics and drift reports.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable

import numpy as np

from .common import as_scalar_or_array, frozen_array, norm_pdf, norm_ppf, validate_correlation_matrix
from .errors import CapacityError, DomainError, ShapeError

MAX_GENERIC_NAMES = 20


def hazard_from_survival(Q, t, T):
    """
    Flat hazard rate implied by a survival probability: h = -ln(Q) / (T - t).
    Q must lie in the open interval (0, 1) and t < T.
    """
    q = np.asarray(Q, dtype=float)
    if np.any(~((q > 0) & (q < 1))):
        raise DomainError(f"Survival probability must be in (0, 1), got {Q}")
    if not t < T:
        raise DomainError(f"Valuation time {t} must be before maturity {T}")
    return as_scalar_or_array(-np.log(q) / (T - t))


def survival_from_hazard(h, t, T):
    """Survival probability exp(-h (T - t)) of a flat hazard rate h >= 0."""
    hazard = np.asarray(h, dtype=float)
    if np.any(~np.isfinite(hazard)) or np.any(hazard < 0):
        raise DomainError(f"Hazard rate must be finite and non-negative, got {h}")
    if not t < T:
        raise DomainError(f"Valuation time {t} must be before maturity {T}")
    return as_scalar_or_array(np.exp(-hazard * (T - t)))


@dataclass(frozen=True, eq=False)
class MarketState:
    """
    Survival probabilities Q_it(T) of the names of a basket at valuation time t.
    Defaulted names carry Q = 0.
    """

    names: tuple
    maturity: float
    survival: np.ndarray
    recovery: np.ndarray
    time: float = 0.0
    defaulted: np.ndarray = None

    def __post_init__(self):
        n = len(self.names)
        survival = np.atleast_1d(np.asarray(self.survival, dtype=float))
        recovery = np.broadcast_to(np.asarray(self.recovery, dtype=float), survival.shape)
        defaulted = np.zeros(n, dtype=bool) if self.defaulted is None else np.asarray(self.defaulted, dtype=bool)
        if survival.shape != (n,) or defaulted.shape != (n,):
            raise ShapeError(f"Expected {n} survival probabilities, got shape {survival.shape}")
        if not self.maturity > 0:
            raise DomainError(f"Maturity must be positive, got {self.maturity}")
        if not 0 <= self.time < self.maturity:
            raise DomainError(f"Valuation time must be in [0, {self.maturity}), got {self.time}")
        alive_q = survival[~defaulted]
        if np.any(~((alive_q > 0) & (alive_q < 1))):
            raise DomainError(f"Survival probabilities of live names must be in (0, 1), got {alive_q}")
        if np.any(survival[defaulted] != 0):
            raise DomainError("Defaulted names must carry a zero survival probability")
        if np.any(~((recovery >= 0) & (recovery < 1))):
            raise DomainError(f"Recovery rates must be in [0, 1), got {recovery}")
        object.__setattr__(self, "names", tuple(str(name) for name in self.names))
        object.__setattr__(self, "survival", frozen_array(survival))
        object.__setattr__(self, "recovery", frozen_array(recovery))
        object.__setattr__(self, "defaulted", frozen_array(defaulted, dtype=bool))

    @classmethod
    def homogeneous(cls, n, survival, recovery=0.0, maturity=1.0, time=0.0):
        names = tuple(f"name{i + 1}" for i in range(n))
        return cls(names, maturity, np.full(n, float(survival)), recovery, time)

    @classmethod
    def from_survival(cls, survival, recovery=0.0, maturity=1.0, time=0.0, names=None):
        survival = np.atleast_1d(np.asarray(survival, dtype=float))
        names = names if names is not None else tuple(f"name{i + 1}" for i in range(len(survival)))
        return cls(tuple(names), maturity, survival, recovery, time)

    @classmethod
    def from_hazards(cls, hazards, maturity, recovery=0.0, time=0.0, names=None):
        hazards = np.atleast_1d(np.asarray(hazards, dtype=float))
        survival = np.atleast_1d(survival_from_hazard(hazards, time, maturity))
        return cls.from_survival(survival, recovery, maturity, time, names)

    @property
    def n(self):
        return len(self.names)

    @property
    def tau(self):
        return self.maturity - self.time

    @property
    def alive(self):
        return ~self.defaulted

    @property
    def hazards(self):
        h = np.full(self.n, np.inf)
        h[self.alive] = hazard_from_survival(self.survival[self.alive], self.time, self.maturity)
        return h

    def common_recovery(self):
        """The recovery rate shared by all names; raises if the names differ."""
        if not np.allclose(self.recovery, self.recovery[0], rtol=0, atol=1e-15):
            raise DomainError(f"Payoff requires a common recovery rate, got {self.recovery}")
        return float(self.recovery[0])

    def with_survival(self, survival):
        return MarketState(self.names, self.maturity, survival, self.recovery, self.time, self.defaulted)

    def with_time(self, time):
        return MarketState(self.names, self.maturity, self.survival, self.recovery, time, self.defaulted)


class CopulaFamily(str, Enum):
    GAUSS_1F = "gauss1f"
    GAUSS_PF = "gausspf"
    CLAYTON = "clayton"


@dataclass(frozen=True, eq=False)
class CopulaSpec:
    """
    Factor copula: Gaussian with one factor (loadings rho_i), Gaussian with p factors
    (loading vectors rho_i), or Clayton with a Gamma(1/theta) factor.
    """

    family: CopulaFamily
    loadings: np.ndarray = None
    theta: float = None

    def __post_init__(self):
        family = CopulaFamily(self.family)
        object.__setattr__(self, "family", family)
        if family == CopulaFamily.CLAYTON:
            if self.theta is None or not self.theta >= 0:
                raise DomainError(f"Clayton dependence parameter must be >= 0, got {self.theta}")
            return
        loadings = np.asarray(self.loadings, dtype=float)
        if family == CopulaFamily.GAUSS_1F:
            loadings = np.atleast_1d(loadings)
            if loadings.ndim != 1:
                raise ShapeError(f"One-factor loadings must be a vector, got shape {loadings.shape}")
            norms = np.abs(loadings)
        else:
            if loadings.ndim != 2:
                raise ShapeError(f"p-factor loadings must be an (n, p) matrix, got shape {loadings.shape}")
            norms = np.sqrt(np.sum(loadings**2, axis=1))
        if np.any(~(norms < 1)):
            raise DomainError(f"Factor loadings must have norm < 1, got {norms}")
        object.__setattr__(self, "loadings", frozen_array(loadings))

    @classmethod
    def gauss1f(cls, rho):
        return cls(CopulaFamily.GAUSS_1F, loadings=rho)

    @classmethod
    def gauss_pf(cls, rho):
        return cls(CopulaFamily.GAUSS_PF, loadings=rho)

    @classmethod
    def clayton(cls, theta):
        return cls(CopulaFamily.CLAYTON, theta=float(theta))

    @classmethod
    def flat(cls, n, rho):
        """One-factor Gaussian copula with the same loading for every name."""
        return cls(CopulaFamily.GAUSS_1F, loadings=np.full(n, float(rho)))

    @property
    def is_gaussian(self):
        return self.family != CopulaFamily.CLAYTON

    @property
    def n(self):
        return None if self.loadings is None else self.loadings.shape[0]

    @property
    def p(self):
        """Factor dimension."""
        if self.family == CopulaFamily.GAUSS_PF:
            return self.loadings.shape[1]
        return 1

    def loading_matrix(self):
        """Loadings as an (n, p) matrix, p = 1 for the one-factor model."""
        if not self.is_gaussian:
            raise DomainError("Clayton copula has no loadings")
        return self.loadings.reshape(self.loadings.shape[0], -1)

    def pricing_correlation(self):
        """Asset correlation matrix rho_i' rho_j with unit diagonal."""
        rho = self.loading_matrix()
        corr = rho @ rho.T
        np.fill_diagonal(corr, 1.0)
        return corr


class PayoffKind(str, Enum):
    GENERIC = "generic"
    FPTD = "fptd"
    STOP_LOSS = "stop_loss"
    WORST_OF_DIGITAL = "worst_of_digital"
    TRANCHE = "tranche"
    COUNT = "count"


def delta_grid(n):
    """
    All 2^n default indicator vectors. Row k holds the binary digits of k with name 0
    as the most significant bit, so a payoff table reshaped to (2,)*n has one axis per name.
    """
    if n > MAX_GENERIC_NAMES:
        raise CapacityError(f"Enumeration of {n} names exceeds the limit of {MAX_GENERIC_NAMES}")
    codes = np.arange(2**n)[:, None]
    return (codes >> np.arange(n - 1, -1, -1)) & 1


@dataclass(frozen=True, eq=False)
class BasketPayoff:
    """
    Payoff psi(delta) paid at maturity as a function of the default indicators.
    Payoffs that only depend on the number of defaults carry count_values g(0..n) and are
    priced through the conditional number-of-defaults recursion; the others are tabulated.
    """

    n: int
    kind: PayoffKind
    order: int = None
    recovery: float = None
    count_values: np.ndarray = None
    func: Callable = field(default=None, compare=False)
    values: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.count_values is not None:
            g = np.asarray(self.count_values, dtype=float)
            if g.shape != (self.n + 1,):
                raise ShapeError(f"Count payoff needs {self.n + 1} values, got shape {g.shape}")
            object.__setattr__(self, "count_values", frozen_array(g))
        elif self.values is not None:
            table = np.asarray(self.values, dtype=float).ravel()
            if table.size != 2**self.n:
                raise ShapeError(f"Payoff table needs {2**self.n} entries, got {table.size}")
            object.__setattr__(self, "values", frozen_array(table))
        elif self.func is None:
            raise ValueError("Payoff needs count values, a table or a function")

    @classmethod
    def fptd(cls, n, p, recovery=0.0):
        """First-p-to-default: (1 - R) min(N, p)."""
        if not 1 <= p <= n:
            raise DomainError(f"Order p must be in 1..{n}, got {p}")
        g = np.minimum(np.arange(n + 1), p) * (1 - recovery)
        return cls(n, PayoffKind.FPTD, order=p, recovery=recovery, count_values=g)

    @classmethod
    def stop_loss(cls, n, p, recovery=0.0):
        """theta_p: (1 - R) 1(N <= p)."""
        if not 0 <= p <= n:
            raise DomainError(f"Order p must be in 0..{n}, got {p}")
        g = (np.arange(n + 1) <= p) * (1 - recovery)
        return cls(n, PayoffKind.STOP_LOSS, order=p, recovery=recovery, count_values=g)

    @classmethod
    def worst_of_digital(cls, n):
        g = (np.arange(n + 1) >= 1).astype(float)
        return cls(n, PayoffKind.WORST_OF_DIGITAL, count_values=g)

    @classmethod
    def tranche(cls, n, attachment, detachment, recovery=0.0):
        """Loss of an [attachment, detachment] tranche on an equally weighted basket."""
        if not 0 <= attachment < detachment <= 1:
            raise DomainError(f"Tranche needs 0 <= a < b <= 1, got [{attachment}, {detachment}]")
        loss = np.arange(n + 1) * (1 - recovery) / n
        g = np.clip(loss - attachment, 0, detachment - attachment)
        return cls(n, PayoffKind.TRANCHE, recovery=recovery, count_values=g)

    @classmethod
    def count(cls, g):
        g = np.asarray(g, dtype=float)
        return cls(len(g) - 1, PayoffKind.COUNT, count_values=g)

    @classmethod
    def generic(cls, n, func):
        """Payoff given by a function of the indicator vector (numpy array of 0/1)."""
        if n > MAX_GENERIC_NAMES:
            raise CapacityError(f"Generic payoffs support up to {MAX_GENERIC_NAMES} names, got {n}")
        return cls(n, PayoffKind.GENERIC, func=func)

    @classmethod
    def from_table(cls, table):
        table = np.asarray(table, dtype=float).ravel()
        n = int(round(math.log2(table.size)))
        return cls(n, PayoffKind.GENERIC, values=table)

    @property
    def is_count(self):
        return self.count_values is not None

    def eval(self, delta):
        """Payoff for one indicator vector."""
        delta = np.asarray(delta, dtype=int)
        if delta.shape != (self.n,):
            raise ShapeError(f"Expected {self.n} indicators, got shape {delta.shape}")
        if self.is_count:
            return float(self.count_values[int(delta.sum())])
        if self.values is not None:
            return float(self.values[int(delta @ (1 << np.arange(self.n - 1, -1, -1)))])
        return float(self.func(delta))

    @cached_property
    def table(self):
        """Payoff over all 2^n indicator vectors, ordered as delta_grid(n)."""
        if self.values is not None:
            return self.values
        deltas = delta_grid(self.n)
        if self.is_count:
            return frozen_array(self.count_values[deltas.sum(axis=1)])
        return frozen_array([self.func(delta) for delta in deltas])


class XiFamily(str, Enum):
    MERTON = "merton"
    POWER_ALPHA = "power_alpha"
    TABLE = "table"


@dataclass(frozen=True)
class XiSchedule:
    """
    Deterministic time change xi(t) of the survival-probability volatility.
    merton: 1 / sqrt(T - t), power_alpha: (1 - t/T)^(-alpha), table: piecewise constant.
    """

    family: XiFamily
    maturity: float
    alpha: float = 0.0
    knots: tuple = ()
    levels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "family", XiFamily(self.family))
        if not self.maturity > 0:
            raise DomainError(f"Maturity must be positive, got {self.maturity}")
        if self.family == XiFamily.POWER_ALPHA and not self.alpha < 1:
            raise DomainError(f"Power family needs alpha < 1, got {self.alpha}")
        if self.family == XiFamily.TABLE:
            knots = tuple(float(k) for k in self.knots)
            levels = tuple(float(v) for v in self.levels)
            if len(knots) != len(levels) or not knots or knots[0] != 0 or np.any(np.diff(knots) <= 0):
                raise DomainError("Table schedule needs increasing knots starting at 0, one level per knot")
            if min(levels) < 0:
                raise DomainError(f"Table levels must be non-negative, got {levels}")
            object.__setattr__(self, "knots", knots)
            object.__setattr__(self, "levels", levels)

    @classmethod
    def merton(cls, maturity):
        return cls(XiFamily.MERTON, maturity)

    @classmethod
    def power_alpha(cls, maturity, alpha):
        return cls(XiFamily.POWER_ALPHA, maturity, alpha=float(alpha))

    @classmethod
    def table(cls, maturity, knots, levels):
        return cls(XiFamily.TABLE, maturity, knots=tuple(knots), levels=tuple(levels))

    @property
    def terminates(self):
        """True when the integral of xi^2 up to maturity diverges."""
        if self.family == XiFamily.MERTON:
            return True
        if self.family == XiFamily.POWER_ALPHA:
            return self.alpha >= 0.5
        return False

    def _check(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.maturity):
            raise DomainError(f"Times must lie in [0, {self.maturity}), got {t}")
        return t

    def __call__(self, t):
        t = self._check(t)
        T = self.maturity
        if self.family == XiFamily.MERTON:
            return as_scalar_or_array(1 / np.sqrt(T - t))
        if self.family == XiFamily.POWER_ALPHA:
            return as_scalar_or_array((1 - t / T) ** (-self.alpha))
        idx = np.searchsorted(self.knots, t, side="right") - 1
        return as_scalar_or_array(np.asarray(self.levels)[idx])

    def integral(self, t0, t1):
        """Integral of xi(u)^2 over [t0, t1]."""
        t0, t1 = self._check(t0), self._check(t1)
        T = self.maturity
        if self.family == XiFamily.MERTON:
            return as_scalar_or_array(np.log((T - t0) / (T - t1)))
        if self.family == XiFamily.POWER_ALPHA:
            if self.alpha == 0.5:
                return as_scalar_or_array(T * np.log((T - t0) / (T - t1)))
            k = 1 - 2 * self.alpha
            return as_scalar_or_array(T / k * ((1 - t0 / T) ** k - (1 - t1 / T) ** k))
        knots = np.append(np.asarray(self.knots), T)
        levels = np.asarray(self.levels)
        cumulative = np.concatenate([[0.0], np.cumsum(levels**2 * np.diff(knots))])
        primitive = lambda t: np.interp(t, knots, cumulative)  # piecewise linear = exact for constant levels
        return as_scalar_or_array(primitive(t1) - primitive(t0))


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """
    Replication-consistent survival-probability dynamics
    dQ_i = sigma_bar_i xi(t) phi(Phi^-1(Q_i)) dW_i + mu_i(t, Q) dt with corr(dW_i, dW_j) = spread_corr[i, j].
    """

    sigma_bar: np.ndarray
    xi: XiSchedule
    spread_corr: np.ndarray
    mu: Callable = field(default=None, compare=False)

    def __post_init__(self):
        sigma_bar = np.atleast_1d(np.asarray(self.sigma_bar, dtype=float))
        corr = np.asarray(self.spread_corr, dtype=float)
        if np.any(sigma_bar < 0):
            raise DomainError(f"Spread volatilities must be non-negative, got {sigma_bar}")
        if corr.shape != (sigma_bar.size, sigma_bar.size):
            raise ShapeError(f"Spread correlation must be {sigma_bar.size}x{sigma_bar.size}, got {corr.shape}")
        diagnostics = validate_correlation_matrix(corr)
        if not diagnostics.accepted:
            raise DomainError(
                f"Spread correlation is not a correlation matrix (min eigenvalue {diagnostics.min_eigenvalue})"
            )
        object.__setattr__(self, "sigma_bar", frozen_array(sigma_bar))
        object.__setattr__(self, "spread_corr", frozen_array(corr))

    @property
    def n(self):
        return self.sigma_bar.size

    @property
    def maturity(self):
        return self.xi.maturity

    def xi_integral(self, t0, t1):
        return self.xi.integral(t0, t1)

    def betas(self, t):
        """beta_it = sigma_bar_i xi(t)."""
        return self.sigma_bar * self.xi(t)

    def vols(self, t, Q):
        """Survival-probability volatilities sigma_it = beta_it phi(Phi^-1(Q_i))."""
        return self.betas(t) * norm_pdf(norm_ppf(np.asarray(Q, dtype=float)))

    def drift(self, t, Q):
        if self.mu is None:
            return np.zeros_like(np.asarray(Q, dtype=float))
        return np.asarray(self.mu(t, Q), dtype=float)

    def require_terminating(self):
        if not self.xi.terminates:
            raise DomainError(f"Schedule {self.xi.family.value} does not drive Q to 0 or 1 at maturity")


@dataclass(frozen=True)
class BreakevenResult:
    """Outcome of a flat break-even correlation search."""

    rho2: float
    converged: bool
    drift_at_root: float = np.nan
    iterations: int = 0
    bracket: tuple = (np.nan, np.nan)
    drift_at_bracket: tuple = (np.nan, np.nan)
    message: str = ""

    @property
    def beta_factor(self):
        return math.sqrt(self.rho2) if self.converged else np.nan


@dataclass(frozen=True, eq=False)
class DriftReport:
    """
    Drift of a basket price per unit time, split by pairs of names.
    total = sum of pair terms + eta.
    """

    pair_terms: dict
    eta: float
    total: float
    a_star: dict = None
    numeric_chi: bool = False
    breakeven: BreakevenResult = None

    @classmethod
    def from_terms(cls, pair_terms, eta=0.0, **kwargs):
        total = math.fsum(pair_terms.values()) + eta
        return cls(dict(pair_terms), float(eta), float(total), **kwargs)

    def __post_init__(self):
        expected = math.fsum(self.pair_terms.values()) + self.eta
        if not math.isclose(self.total, expected, rel_tol=1e-12, abs_tol=1e-300):
            raise ValueError(f"Drift total {self.total} does not match its terms {expected}")

    def matrix(self, n):
        """Pair terms as a symmetric n x n matrix."""
        m = np.zeros((n, n))
        for (i, j), value in self.pair_terms.items():
            m[i, j] = m[j, i] = value
        return m
