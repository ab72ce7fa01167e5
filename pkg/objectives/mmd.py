"""
Squared maximum mean discrepancy with a Gaussian kernel (evaluation metric)
"""

from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from core.errors import SamplingError

BLOCK_ROWS = 1024
MEDIAN_SUBSAMPLE = 1000


def _as_rows(samples) -> np.ndarray:
    x = np.asarray(getattr(samples, "values", samples), dtype=np.float64)
    return x.reshape(-1, 1) if x.ndim == 1 else x


def median_bandwidth(a: np.ndarray, b: np.ndarray) -> float:
    """Median pairwise distance of the pooled samples (evenly thinned)"""
    pooled = np.concatenate([a, b], axis=0)
    if len(pooled) > MEDIAN_SUBSAMPLE:
        pooled = pooled[np.linspace(0, len(pooled) - 1, MEDIAN_SUBSAMPLE).astype(int)]
    median = float(np.median(pdist(pooled)))
    return median if median > 0.0 else 1.0


def _kernel_sum(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    total = 0.0
    for start in range(0, len(x), BLOCK_ROWS):
        block = cdist(x[start:start + BLOCK_ROWS], y, "sqeuclidean")
        total += float(np.exp(-0.5 * block / bandwidth ** 2).sum())
    return total


def _kernel_diag(x: np.ndarray, y: np.ndarray, bandwidth: float) -> float:
    return float(np.exp(-0.5 * ((x - y) ** 2).sum(axis=1) / bandwidth ** 2).sum())


def mmd_rbf(samples_a, samples_b, bandwidth: Optional[float] = None) -> float:
    """
    Unbiased U-statistic estimate of MMD^2

    For equal sample counts the paired form excludes i == j in every term,
    so identical lists give exactly zero.

    Args:
        samples_a, samples_b: (n, d) sample arrays
        bandwidth: kernel width (default: median heuristic)

    Raises:
        SamplingError: fewer than 2 samples in a set
    """
    a = _as_rows(samples_a)
    b = _as_rows(samples_b)
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise SamplingError(f"mmd_rbf needs at least 2 samples per set, got {n} and {m}")
    if bandwidth is None:
        bandwidth = median_bandwidth(a, b)

    aa = _kernel_sum(a, a, bandwidth) - n
    bb = _kernel_sum(b, b, bandwidth) - m
    ab = _kernel_sum(a, b, bandwidth)
    if n == m:
        ab -= _kernel_diag(a, b, bandwidth)
        return (aa + bb - 2.0 * ab) / (n * (n - 1))
    return aa / (n * (n - 1)) + bb / (m * (m - 1)) - 2.0 * ab / (n * m)
