"""
Divergences by numerical integration and exact summation
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import rel_entr

from config.settings import (
    QUADRATURE_POINTS_1D,
    QUADRATURE_POINTS_2D,
    QUADRATURE_SPAN_SIGMAS,
    QUADRATURE_TOLERANCE,
)
from core.errors import OracleError
from utils.logging_utils import get_logger

logger = get_logger(__name__)

Density = Callable[[np.ndarray], np.ndarray]
KINDS = ("kl", "jsd")

# KL with p > 0 where q = 0; returned as such, never produced by overflow
INFINITE_DIVERGENCE = math.inf


@dataclass
class QuadratureResult:
    value: float
    error_estimate: float
    warning: str = ""

    def __float__(self) -> float:
        return self.value


def gaussian_grid(means: Sequence[float], stds: Sequence[float], points: int = QUADRATURE_POINTS_1D,
                  span: float = QUADRATURE_SPAN_SIGMAS) -> np.ndarray:
    """Evenly spaced grid covering mean +/- span * std of every component; odd size for halving"""
    low = min(m - span * s for m, s in zip(means, stds))
    high = max(m + span * s for m, s in zip(means, stds))
    return np.linspace(low, high, points + 1 - points % 2)


def _integrand(p: np.ndarray, q: np.ndarray, kind: str) -> np.ndarray:
    if kind == "kl":
        return rel_entr(p, q)
    m = 0.5 * (p + q)
    return 0.5 * rel_entr(p, m) + 0.5 * rel_entr(q, m)


def _check_kind(kind: str) -> str:
    kind = kind.lower()
    if kind not in KINDS:
        raise OracleError(f"unknown divergence '{kind}' (choose from {KINDS})")
    return kind


def numeric_divergence(p: Density, q: Density, kind: str, grid: np.ndarray,
                       tolerance: float = QUADRATURE_TOLERANCE) -> QuadratureResult:
    """
    Trapezoid-rule KL(p || q) or JSD(p, q) on a 1-D grid

    The truncation error is estimated by Richardson comparison with every
    other grid point; above ``tolerance`` the result carries a warning.
    """
    kind = _check_kind(kind)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 3:
        raise OracleError("quadrature grid must be 1-D with at least 3 points")
    values = _integrand(np.asarray(p(grid), dtype=np.float64), np.asarray(q(grid), dtype=np.float64), kind)
    if np.isinf(values).any():
        return QuadratureResult(INFINITE_DIVERGENCE, 0.0, "")
    fine = float(trapezoid(values, grid))
    coarse = float(trapezoid(values[::2], grid[::2]))
    error = abs(fine - coarse) / 3.0
    warning = ""
    if error > tolerance:
        warning = f"grid too coarse: estimated truncation error {error:.2e} > {tolerance:.0e}"
        logger.warning("[quadrature] %s", warning)
    return QuadratureResult(fine, error, warning)


def numeric_divergence_2d(p: Density, q: Density, kind: str, grid_x: np.ndarray, grid_y: np.ndarray,
                          tolerance: float = QUADRATURE_TOLERANCE) -> QuadratureResult:
    """Tensor-grid version of ``numeric_divergence``; densities take (n, 2) points"""
    kind = _check_kind(kind)
    xx, yy = np.meshgrid(grid_x, grid_y, indexing="ij")
    points = np.stack([xx.reshape(-1), yy.reshape(-1)], axis=1)
    values = _integrand(np.asarray(p(points), dtype=np.float64), np.asarray(q(points), dtype=np.float64), kind)
    if np.isinf(values).any():
        return QuadratureResult(INFINITE_DIVERGENCE, 0.0, "")
    values = values.reshape(xx.shape)
    fine = float(trapezoid(trapezoid(values, grid_y, axis=1), grid_x))
    coarse = float(trapezoid(trapezoid(values[::2, ::2], grid_y[::2], axis=1), grid_x[::2]))
    error = abs(fine - coarse) / 3.0
    warning = ""
    if error > tolerance:
        warning = f"grid too coarse: estimated truncation error {error:.2e} > {tolerance:.0e}"
        logger.warning("[quadrature] %s", warning)
    return QuadratureResult(fine, error, warning)


def gaussian_density(mean: float, std: float) -> Density:
    def density(x: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * ((x - mean) / std) ** 2) / (std * math.sqrt(2.0 * math.pi))
    return density


def gaussian_kl(mu_q, var_q, mu_p, var_p) -> float:
    """KL(N(mu_q, var_q) || N(mu_p, var_p)), summed over dimensions"""
    mu_q, var_q, mu_p, var_p = (np.asarray(a, dtype=np.float64) for a in (mu_q, var_q, mu_p, var_p))
    if np.any(var_q <= 0) or np.any(var_p <= 0):
        raise OracleError("gaussian_kl: variances must be positive")
    return float(np.sum(0.5 * (np.log(var_p / var_q) + (var_q + (mu_q - mu_p) ** 2) / var_p - 1.0)))


def discrete_kl(p: np.ndarray, q: np.ndarray) -> float:
    """
    KL(p || q) for probability tables of equal shape

    0 log(0/q) = 0; mass of p where q = 0 gives INFINITE_DIVERGENCE.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise OracleError(f"discrete_kl: shapes {p.shape} and {q.shape} differ")
    if np.any((p > 0.0) & (q <= 0.0)):
        return INFINITE_DIVERGENCE
    return float(np.sum(rel_entr(p, q)))


def discrete_jsd(p: np.ndarray, q: np.ndarray) -> float:
    """JSD(p, q) = 1/2 KL(p || m) + 1/2 KL(q || m), m = (p + q) / 2; at most log 2"""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise OracleError(f"discrete_jsd: shapes {p.shape} and {q.shape} differ")
    m = 0.5 * (p + q)
    return float(0.5 * np.sum(rel_entr(p, m)) + 0.5 * np.sum(rel_entr(q, m)))


def default_2d_grid(means: Sequence[Tuple[float, float]], stds: Sequence[Tuple[float, float]],
                    points: int = QUADRATURE_POINTS_2D) -> Tuple[np.ndarray, np.ndarray]:
    grid_x = gaussian_grid([m[0] for m in means], [s[0] for s in stds], points)
    grid_y = gaussian_grid([m[1] for m in means], [s[1] for s in stds], points)
    return grid_x, grid_y
