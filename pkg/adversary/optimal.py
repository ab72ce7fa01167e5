"""
Bayes-optimal discriminators built from known densities
"""

from typing import Callable, Mapping, Sequence

import numpy as np

from config.settings import LOGIT_CLAMP
from core.tensor import Tensor, as_tensor

LogDensity = Callable[[np.ndarray], np.ndarray]


def analytic_optimal_discriminator(
    p_density: Callable[[np.ndarray], np.ndarray],
    q_density: Callable[[np.ndarray], np.ndarray],
) -> Callable[[np.ndarray], np.ndarray]:
    """
    D*(x) = p(x) / (p(x) + q(x)), and 1/2 where both densities vanish
    """

    def optimal(x: np.ndarray) -> np.ndarray:
        p = np.asarray(p_density(x), dtype=np.float64)
        q = np.asarray(q_density(x), dtype=np.float64)
        total = p + q
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(total > 0.0, p / np.where(total > 0.0, total, 1.0), 0.5)
        return out

    return optimal


def log_ratio_logits(log_p: np.ndarray, log_q: np.ndarray) -> np.ndarray:
    """log p - log q clamped to the logit range, 0 where both are -inf"""
    log_p = np.asarray(log_p, dtype=np.float64)
    log_q = np.asarray(log_q, dtype=np.float64)
    both_zero = np.isneginf(log_p) & np.isneginf(log_q)
    with np.errstate(invalid="ignore"):
        diff = np.where(both_zero, 0.0, log_p - log_q)
    return np.clip(diff, -LOGIT_CLAMP, LOGIT_CLAMP)


class AnalyticDiscriminator:
    """
    Exact classifier logit log p(t) - log q(t) for tuples t

    Shares the ``logits(params, tuples)`` protocol with LocalAdversary; it
    has no parameters and contributes no gradient.

    Args:
        log_p: tuple rows -> log-density of the label-1 side
        log_q: tuple rows -> log-density of the label-0 side
        slots: variables forming the tuple
        name: id used in metrics
    """

    def __init__(self, log_p: LogDensity, log_q: LogDensity, slots: Sequence[str] = (), name: str = "analytic"):
        self.log_p = log_p
        self.log_q = log_q
        self.slots = tuple(slots)
        self.name = name

    def param_names(self, params: Mapping[str, object]):
        return []

    def logits(self, params: Mapping[str, object], tuples) -> Tensor:
        x = as_tensor(tuples).values
        return Tensor(log_ratio_logits(self.log_p(x), self.log_q(x)).reshape(x.shape[0]))

    def __call__(self, tuples) -> np.ndarray:
        """D*(t) as a plain array"""
        return self.logits({}, tuples).sigmoid().values
