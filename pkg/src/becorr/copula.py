"""
Conditional default probabilities p_{i|x} of the factor copulas, their derivatives with respect
to the survival probability Q and the factor x, and the chi functions (running integral of
d2p/dQ2 against the factor density).

Kernels evaluate all names at all quadrature nodes at once: for survival probabilities of
shape (..., n) and m nodes the result has shape (..., m, n).
"""

import numpy as np
from scipy.special import gammaln
from scipy.stats import gamma as gamma_dist

from .common import norm_cdf, norm_isf, norm_pdf, norm_ppf
from .errors import DomainError, ShapeError
from .model import CopulaFamily, CopulaSpec
from .quadrature import hermite_rule, laguerre_rule, tensor_hermite_rule

CLAYTON_Q_MAX = 1 - 1e-12


def _check_survival(Q, upper=1.0):
    q = np.asarray(Q, dtype=float)
    if np.any(~((q > 0) & (q < upper))):
        raise DomainError(f"Survival probability must be in (0, {upper}), got {Q}")
    return q


def _check_loading(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(rho) < 1)):
        raise DomainError(f"Factor loading must satisfy |rho| < 1, got {rho}")
    return rho


def _check_theta(theta):
    if not theta > 0:
        raise DomainError(f"Clayton dependence parameter must be positive, got {theta}")
    return float(theta)


def _gauss_d(Q, rho, x):
    s = norm_isf(_check_survival(Q))
    rho = _check_loading(rho)
    c = np.sqrt(1 - rho**2)
    return s, c, (s - rho * np.asarray(x, dtype=float)) / c


def cond_default_gauss1f(Q, rho, x):
    """p_{i|x} = Phi((Phi_bar^-1(Q) - rho x) / sqrt(1 - rho^2)), broadcasting over the arguments."""
    return norm_cdf(_gauss_d(Q, rho, x)[2])


def cond_default_gauss_pf(Q, rho, x):
    """
    p-factor Gaussian conditional default probability.
    Parameters:
        Q - survival probability
        rho - loading vector of length p with Euclidean norm < 1
        x - factor vector of length p, or an (m, p) array of factor values
    """
    rho = np.asarray(rho, dtype=float)
    x = np.asarray(x, dtype=float)
    if rho.ndim != 1 or x.shape[-1] != rho.size:
        raise ShapeError(f"Loading vector of length {rho.size} does not match factor of shape {x.shape}")
    norm2 = float(rho @ rho)
    if not norm2 < 1:
        raise DomainError(f"Loading vector must have norm < 1, got {np.sqrt(norm2)}")
    s = norm_isf(_check_survival(Q))
    return norm_cdf((s - x @ rho) / np.sqrt(1 - norm2))


def cond_default_clayton(Q, theta, x):
    """p_{i|x} = exp(-x ((1 - Q)^-theta - 1)) for a Gamma(1/theta) factor value x >= 0."""
    q = _check_survival(Q, CLAYTON_Q_MAX)
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError(f"Gamma factor values must be non-negative, got {x}")
    return np.exp(-x * ((1 - q) ** (-theta) - 1))


def chi_gauss(Q, rho, x):
    """chi(x) = rho phi(x) / phi(Phi^-1(Q)) * dp/dQ, the running integral of d2p/dQ2 phi."""
    s, c, d = _gauss_d(Q, rho, x)
    rho = np.asarray(rho, dtype=float)
    return -rho * norm_pdf(x) * norm_pdf(d) / (norm_pdf(s) ** 2 * c)


def clayton_factor_density(x, theta):
    """Gamma(1/theta, 1) density."""
    a = 1 / _check_theta(theta)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_f = (a - 1) * np.log(x) - x - gammaln(a)
        return np.where(x > 0, np.exp(log_f), 0.0 if a > 1 else (1.0 if a == 1 else np.inf))


def chi_clayton(Q, theta, x):
    """chi(x) = dp/dQ * x theta f_X(x) / (1 - Q)."""
    q = _check_survival(Q, CLAYTON_Q_MAX)
    theta = _check_theta(theta)
    x = np.asarray(x, dtype=float)
    p = cond_default_clayton(q, theta, x)
    dp = -x * theta * (1 - q) ** (-theta - 1) * p
    with np.errstate(invalid="ignore"):
        chi = dp * x * theta * clayton_factor_density(x, theta) / (1 - q)
    return np.where(x > 0, chi, 0.0)


def vol_beta(sigma, Q):
    """beta = sigma / phi(Phi^-1(Q))."""
    q = _check_survival(Q)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise DomainError(f"Volatility must be non-negative, got {sigma}")
    return sigma / norm_pdf(norm_ppf(q))


def sigma_from_beta(beta, Q):
    """Inverse of vol_beta: sigma = beta phi(Phi^-1(Q))."""
    return np.asarray(beta, dtype=float) * norm_pdf(norm_ppf(_check_survival(Q)))


def gaussian_factorization_residual(Q, rho, x):
    """|phi(d) phi(x) - phi((x - rho s) / sqrt(1 - rho^2)) phi(s)|, zero up to round-off."""
    s, c, d = _gauss_d(Q, rho, x)
    return np.abs(norm_pdf(d) * norm_pdf(x) - norm_pdf((x - rho * s) / c) * norm_pdf(s))


class ConditionalKernel:
    """
    Common interface of the copula kernels. Methods take survival probabilities of shape (..., n)
    and optional factor values (defaults to the quadrature nodes) and return (..., m, n).
    """

    closed_form_chi = True
    factor_dim = 1

    def __init__(self, rule):
        self.rule = rule

    def _nodes(self, x):
        return self.rule.nodes if x is None else np.asarray(x, dtype=float)

    @property
    def support(self):
        """Factor values at which the chi boundary term is evaluated."""
        nodes = self.rule.nodes
        return float(nodes.min()), float(nodes.max())

    def density(self, x=None):
        raise NotImplementedError

    def total_probability_gap(self, Q):
        """Largest |integral of p_{i|x} f_X - (1 - Q_i)| over the names."""
        q = np.atleast_1d(np.asarray(Q, dtype=float))
        return float(np.max(np.abs(self.rule.apply(np.moveaxis(self.p(q), -2, -1)) - (1 - q))))


class GaussianKernel(ConditionalKernel):
    """One- and p-factor Gaussian copula kernel; loadings of shape (n,) or (n, p)."""

    def __init__(self, loadings, rule):
        super().__init__(rule)
        loadings = np.asarray(loadings, dtype=float)
        self.loadings = loadings.reshape(loadings.shape[0], -1)
        self.factor_dim = self.loadings.shape[1]
        if (rule.nodes.ndim == 1 and self.factor_dim != 1) or (rule.nodes.ndim == 2 and rule.dim != self.factor_dim):
            raise ShapeError(f"Rule of dimension {rule.dim} does not match {self.factor_dim} factors")
        norm2 = np.sum(self.loadings**2, axis=1)
        if np.any(~(norm2 < 1)):
            raise DomainError(f"Factor loadings must have norm < 1, got {np.sqrt(norm2)}")
        self.c = np.sqrt(1 - norm2)

    def _terms(self, Q, x):
        s = norm_isf(_check_survival(Q))[..., None, :]
        x = self._nodes(x)
        rho_x = x.reshape(x.shape[0], -1) @ self.loadings.T
        return s, (s - rho_x) / self.c

    def density(self, x=None):
        x = self._nodes(x)
        return np.prod(norm_pdf(x.reshape(x.shape[0], -1)), axis=1)

    def p(self, Q, x=None):
        return norm_cdf(self._terms(Q, x)[1])

    def dp_dq(self, Q, x=None):
        s, d = self._terms(Q, x)
        return -norm_pdf(d) / (norm_pdf(s) * self.c)

    def _one_factor(self):
        if self.factor_dim != 1:
            raise ShapeError(f"Factor derivatives and chi need a one-factor kernel, got {self.factor_dim} factors")
        return self.loadings[:, 0]

    def d2p_dq2(self, Q, x=None):
        rho = self._one_factor()
        s, d = self._terms(Q, x)
        x = self._nodes(x).reshape(-1, 1)
        return norm_pdf(d) * rho * (x - rho * s) / (norm_pdf(s) ** 2 * self.c**3)

    def dp_dx(self, Q, x=None):
        rho = self._one_factor()
        d = self._terms(Q, x)[1]
        return -rho * norm_pdf(d) / self.c

    def chi_over_density(self, Q, x=None):
        rho = self._one_factor()
        s, d = self._terms(Q, x)
        return -rho * norm_pdf(d) / (norm_pdf(s) ** 2 * self.c)

    def chi(self, Q, x=None):
        return self.chi_over_density(Q, x) * self.density(x)[:, None]

    def pair_density(self, Q, x=None):
        """phi(d_i) / sqrt(1 - |rho_i|^2) per name; products of two columns give the Gaussian drift integrand."""
        d = self._terms(Q, x)[1]
        return norm_pdf(d) / self.c


class ClaytonKernel(ConditionalKernel):
    """Clayton copula: p_{i|x} = exp(-x ((1 - Q_i)^-theta - 1)), X ~ Gamma(1/theta, 1)."""

    def __init__(self, theta, rule):
        super().__init__(rule)
        self.theta = _check_theta(theta)

    def _terms(self, Q, x):
        q = _check_survival(Q, CLAYTON_Q_MAX)[..., None, :]
        x = self._nodes(x)[:, None]
        u = (1 - q) ** (-self.theta) - 1
        return q, x, np.exp(-x * u), u

    def density(self, x=None):
        return clayton_factor_density(self._nodes(x), self.theta)

    def p(self, Q, x=None):
        return self._terms(Q, x)[2]

    def dp_dq(self, Q, x=None):
        q, x, p, _ = self._terms(Q, x)
        return -x * self.theta * (1 - q) ** (-self.theta - 1) * p

    def d2p_dq2(self, Q, x=None):
        q, x, p, _ = self._terms(Q, x)
        th = self.theta
        return p * ((x * th) ** 2 * (1 - q) ** (-2 * th - 2) - x * th * (th + 1) * (1 - q) ** (-th - 2))

    def dp_dx(self, Q, x=None):
        _, _, p, u = self._terms(Q, x)
        return -u * p

    def chi_over_density(self, Q, x=None):
        q, x, _, _ = self._terms(Q, x)
        return self.dp_dq(Q, x[:, 0]) * x * self.theta / (1 - q)

    def chi(self, Q, x=None):
        x = self._nodes(x)
        with np.errstate(invalid="ignore"):
            chi = self.chi_over_density(Q, x) * self.density(x)[:, None]
        return np.where((x > 0)[:, None], chi, 0.0)


class ArchimedeanKernel(ConditionalKernel):
    """
    Generic Archimedean kernel p_{i|x} = exp(-x L^-1(1 - Q_i)) for a positive factor with
    density f and Laplace transform L. Only the inverse transform is required; its derivatives
    are taken by central differences and chi by cumulative quadrature on the support.
    """

    closed_form_chi = False

    def __init__(self, laplace_inv, density, rule, support, laplace=None, n_grid=20001, step=1e-4):
        super().__init__(rule)
        self.laplace_inv = laplace_inv
        self.laplace = laplace
        self._density = density
        self._support = (float(support[0]), float(support[1]))
        self.n_grid = n_grid
        self.step = step

    @classmethod
    def gamma_factor(cls, theta, laplace_inv, n_nodes=None, laplace=None):
        """Archimedean kernel on the Gamma(1/theta, 1) factor of the Clayton model."""
        theta = _check_theta(theta)
        rule = laguerre_rule(theta, n_nodes) if n_nodes else laguerre_rule(theta)
        upper = float(gamma_dist.isf(1e-15, 1 / theta))
        return cls(laplace_inv, lambda x: clayton_factor_density(x, theta), rule, (0.0, upper), laplace)

    @property
    def support(self):
        return self._support

    def density(self, x=None):
        return np.asarray(self._density(self._nodes(x)), dtype=float)

    def _inverse_terms(self, Q):
        u = 1 - _check_survival(Q)
        h = self.step * np.minimum(u, 1 - u)
        f0, fp, fm = self.laplace_inv(u), self.laplace_inv(u + h), self.laplace_inv(u - h)
        return f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / h**2

    def _terms(self, Q, x):
        g0, g1, g2 = (term[..., None, :] for term in self._inverse_terms(Q))
        x = self._nodes(x)[:, None]
        return x, np.exp(-x * g0), g0, g1, g2

    def p(self, Q, x=None):
        return self._terms(Q, x)[1]

    def dp_dq(self, Q, x=None):
        x, p, _, g1, _ = self._terms(Q, x)
        return x * g1 * p

    def d2p_dq2(self, Q, x=None):
        x, p, _, g1, g2 = self._terms(Q, x)
        return p * ((x * g1) ** 2 - x * g2)

    def dp_dx(self, Q, x=None):
        _, p, g0, _, _ = self._terms(Q, x)
        return -g0 * p

    def chi(self, Q, x=None):
        x = self._nodes(x)
        lower, upper = self._support
        grid = np.linspace(lower, upper, self.n_grid)
        with np.errstate(invalid="ignore"):
            integrand = self.d2p_dq2(Q, grid) * self.density(grid)[:, None]
        integrand = np.where(np.isfinite(integrand), integrand, 0.0)
        h = grid[1] - grid[0]
        running = np.concatenate(
            [
                np.zeros_like(integrand[..., :1, :]),
                np.cumsum(0.5 * h * (integrand[..., 1:, :] + integrand[..., :-1, :]), axis=-2),
            ],
            axis=-2,
        )
        position = np.clip((x - lower) / h, 0, self.n_grid - 1)
        idx = np.minimum(position.astype(int), self.n_grid - 2)
        frac = (position - idx)[:, None]
        return running[..., idx, :] * (1 - frac) + running[..., idx + 1, :] * frac

    def chi_over_density(self, Q, x=None):
        return self.chi(Q, x) / self.density(x)[:, None]


def kernel_for(copula: CopulaSpec, n_nodes=None) -> ConditionalKernel:
    """Kernel with the default (or requested) quadrature rule for a copula specification."""
    if copula.family == CopulaFamily.CLAYTON:
        theta = _check_theta(copula.theta)
        return ClaytonKernel(theta, laguerre_rule(theta, n_nodes) if n_nodes else laguerre_rule(theta))
    if copula.family == CopulaFamily.GAUSS_1F:
        return GaussianKernel(copula.loadings, hermite_rule(n_nodes) if n_nodes else hermite_rule())
    rule = tensor_hermite_rule(n_nodes, copula.p) if n_nodes else tensor_hermite_rule(p=copula.p)
    return GaussianKernel(copula.loadings, rule)


