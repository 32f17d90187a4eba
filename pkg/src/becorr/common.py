"""
Common functions, helpers, and utilities.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cholesky, eigh
from scipy.special import ndtr, ndtri

from .errors import ShapeError

PSD_TOLERANCE = 1e-10
_INV_SQRT_2PI = 1 / np.sqrt(2 * np.pi)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_cdf(x):
    """Standard normal distribution function."""
    return ndtr(x)


def norm_ppf(q):
    """Standard normal quantile."""
    return ndtri(q)


def norm_isf(q):
    """
    Quantile of the complementary normal distribution, i.e. the solution of 1 - Phi(s) = q.
    Computed as -ndtri(q) so that q close to 0 or 1 keeps full precision.
    """
    return -ndtri(q)


def as_scalar_or_array(value):
    """Return a python float for 0-d results and the array otherwise."""
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value


def frozen_array(values, dtype=float):
    """Copy values into a read-only numpy array."""
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class CorrelationDiagnostics:
    symmetric: bool
    unit_diagonal: bool
    min_eigenvalue: float
    eigenvalues: np.ndarray
    accepted: bool


def validate_correlation_matrix(matrix, tolerance=PSD_TOLERANCE) -> CorrelationDiagnostics:
    """
    Check that a matrix is a valid correlation matrix.
    Parameters:
        matrix - square matrix
        tolerance - smallest eigenvalue still accepted is -tolerance
    Returns:
        CorrelationDiagnostics with symmetry, unit diagonal, eigenvalues and the accepted flag
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"Correlation matrix must be square, got shape {m.shape}")
    symmetric = bool(np.allclose(m, m.T, rtol=0, atol=1e-12))
    unit_diagonal = bool(np.allclose(np.diag(m), 1.0, rtol=0, atol=1e-12))
    eigenvalues = np.linalg.eigvalsh(0.5 * (m + m.T)) if m.size else np.zeros(0)
    min_eigenvalue = float(eigenvalues[0]) if eigenvalues.size else 1.0
    accepted = symmetric and unit_diagonal and min_eigenvalue >= -tolerance
    return CorrelationDiagnostics(symmetric, unit_diagonal, min_eigenvalue, eigenvalues, accepted)


def correlation_factor(matrix):
    """
    Lower triangular (or square root) factor L with L @ L.T == matrix.
    Cholesky is tried first, singular PSD matrices fall back to the eigen decomposition.
    """
    m = np.asarray(matrix, dtype=float)
    try:
        return cholesky(m, lower=True)
    except LinAlgError:
        eigenvalues, eigenvectors = eigh(m)
        eigenvalues = np.clip(eigenvalues, 0, None)  # round-off negatives
        return eigenvectors * np.sqrt(eigenvalues)


def uniform_correlation(n, rho):
    """n x n matrix with unit diagonal and constant off-diagonal rho."""
    m = np.full((n, n), float(rho))
    np.fill_diagonal(m, 1.0)
    return m


def parse_float_list(text):
    """Parse "0.1,0.2" (or a single number) into a list of floats."""
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(item) for item in str(text).split(",") if item.strip() != ""]
