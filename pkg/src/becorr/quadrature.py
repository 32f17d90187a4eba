"""
Gauss rules for integration against the factor densities: standard normal in one and
p dimensions, and the Gamma(1/theta, 1) density of the Clayton factor.
Nodes and weights come from the eigen decomposition of the Jacobi matrix (Golub-Welsch).
"""

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh_tridiagonal

from .common import frozen_array
from .errors import CapacityError, DomainError

DEFAULT_HERMITE_NODES = 64
DEFAULT_TENSOR_NODES = 32
DEFAULT_LAGUERRE_NODES = 64
MAX_TENSOR_DIM = 3


class RuleKind(str, Enum):
    GAUSS_HERMITE = "gauss_hermite"
    TENSOR_HERMITE = "tensor_hermite"
    GAUSS_LAGUERRE = "gauss_laguerre"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """
    Nodes and positive weights; sum(weights * f(nodes)) approximates the integral of f
    against the factor density. Tensor rules hold nodes as an (m, p) array.
    """

    kind: RuleKind
    nodes: np.ndarray
    weights: np.ndarray
    n_nodes: int
    dim: int = 1
    shape: float = None

    @property
    def size(self):
        return self.weights.size

    def apply(self, values):
        """Weighted sum over the last axis of values (one entry per node)."""
        values = np.asarray(values, dtype=float)
        return values @ self.weights

    def error_estimate(self, f):
        return error_estimate(f, self)

    def halved(self):
        """Rule of the same kind with half the nodes per axis, used for error estimates."""
        n = max(self.n_nodes // 2, 1)
        if self.kind == RuleKind.GAUSS_HERMITE:
            return hermite_rule(n)
        if self.kind == RuleKind.TENSOR_HERMITE:
            return tensor_hermite_rule(n, self.dim)
        return laguerre_rule(1 / self.shape, n)


def _golub_welsch(diagonal, off_diagonal):
    """Nodes and normalized weights from the symmetric tridiagonal Jacobi matrix."""
    nodes, vectors = eigh_tridiagonal(diagonal, off_diagonal)
    weights = vectors[0, :] ** 2
    return nodes, weights / weights.sum()


@lru_cache(maxsize=None)
def hermite_rule(n_nodes=DEFAULT_HERMITE_NODES) -> QuadratureRule:
    """Gauss-Hermite rule for the standard normal density (probabilists' Hermite polynomials)."""
    if n_nodes < 1:
        raise DomainError(f"Number of nodes must be positive, got {n_nodes}")
    k = np.arange(1, n_nodes)
    nodes, weights = _golub_welsch(np.zeros(n_nodes), np.sqrt(k))
    # the rule is symmetric around 0
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(RuleKind.GAUSS_HERMITE, frozen_array(nodes), frozen_array(weights), n_nodes)


@lru_cache(maxsize=None)
def tensor_hermite_rule(n_nodes=DEFAULT_TENSOR_NODES, p=2) -> QuadratureRule:
    """Tensor product of one-dimensional Gauss-Hermite rules, p <= 3."""
    if not 1 <= p <= MAX_TENSOR_DIM:
        raise CapacityError(f"Tensor rules support 1 to {MAX_TENSOR_DIM} factors, got {p}")
    base = hermite_rule(n_nodes)
    grids = np.meshgrid(*([base.nodes] * p), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weight_grids = np.meshgrid(*([base.weights] * p), indexing="ij")
    weights = np.prod(np.stack([w.ravel() for w in weight_grids], axis=1), axis=1)
    return QuadratureRule(RuleKind.TENSOR_HERMITE, frozen_array(nodes), frozen_array(weights), n_nodes, dim=p)


@lru_cache(maxsize=None)
def laguerre_rule(theta, n_nodes=DEFAULT_LAGUERRE_NODES) -> QuadratureRule:
    """
    Generalized Gauss-Laguerre rule for the Gamma(a, 1) density with shape a = 1/theta.
    Jacobi matrix: diagonal 2k + a, off-diagonal sqrt(k (k + a - 1)).
    """
    if not theta > 0:
        raise DomainError(f"Clayton dependence parameter must be positive, got {theta}")
    a = 1 / theta
    k = np.arange(1, n_nodes)
    nodes, weights = _golub_welsch(2 * np.arange(n_nodes) + a, np.sqrt(k * (k + a - 1)))
    return QuadratureRule(
        RuleKind.GAUSS_LAGUERRE, frozen_array(nodes), frozen_array(weights), n_nodes, shape=a
    )


def _evaluate(f, rule):
    values = np.asarray(f(rule.nodes), dtype=float)
    values = np.broadcast_to(values, (rule.size,))
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        idx = int(bad[0])
        raise FloatingPointError(f"Integrand is not finite at node {idx} (x = {rule.nodes[idx]})")
    return values


def _require(rule, kind):
    if rule.kind != kind:
        raise ValueError(f"Expected a {kind.value} rule, got {rule.kind.value}")


def integrate_gaussian(f, rule=None):
    """
    Integral of f(x) phi(x) over the real line.
    f must accept the array of nodes and return one value per node (or a constant).
    """
    rule = hermite_rule() if rule is None else rule
    _require(rule, RuleKind.GAUSS_HERMITE)
    return float(rule.apply(_evaluate(f, rule)))


def integrate_gaussian_p(f, rule=None):
    """Integral of f(x) against the p-dimensional standard normal; f receives an (m, p) array."""
    rule = tensor_hermite_rule() if rule is None else rule
    _require(rule, RuleKind.TENSOR_HERMITE)
    return float(rule.apply(_evaluate(f, rule)))


def integrate_gamma(f, rule):
    """Integral of f(x) against the Gamma(1/theta, 1) density of the rule."""
    _require(rule, RuleKind.GAUSS_LAGUERRE)
    return float(rule.apply(_evaluate(f, rule)))


def error_estimate(f, rule):
    """Difference between the rule and the rule with half as many nodes."""
    return abs(float(rule.apply(_evaluate(f, rule))) - float(rule.halved().apply(_evaluate(f, rule.halved()))))


def cumulative_integral(f, lower, upper, n_points=20001):
    """
    Running integral of f from lower on a uniform grid.
    Returns:
        grid, values - values[k] approximates the integral of f over [lower, grid[k]]
    """
    grid = np.linspace(lower, upper, n_points)
    values = cumulative_trapezoid(np.asarray(f(grid), dtype=float), grid, initial=0.0)
    return grid, values
