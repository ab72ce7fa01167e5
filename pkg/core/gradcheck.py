"""
Finite-difference gradient oracle
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np

from config.settings import GRADCHECK_STEP, GRADCHECK_TOLERANCE
from core.tensor import ComputationRecord, Tensor, backward


def finite_diff_grad(
    loss_fn: Callable[[Dict[str, np.ndarray]], float],
    params: Mapping[str, np.ndarray],
    h: float = GRADCHECK_STEP,
    names: Optional[Sequence[str]] = None,
) -> Dict[str, np.ndarray]:
    """
    Central-difference gradient estimate

    Args:
        loss_fn: deterministic map from a full parameter dict to a float
        params: name -> array at which to differentiate
        h: step size (> 0)
        names: parameters to perturb (default: all)

    Returns:
        name -> (loss(p+h) - loss(p-h)) / 2h, elementwise
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    base = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    grads: Dict[str, np.ndarray] = {}
    for name in names or list(base):
        grad = np.zeros_like(base[name])
        flat = grad.reshape(-1)
        for index in range(base[name].size):
            original = base[name].reshape(-1)[index]
            base[name].reshape(-1)[index] = original + h
            upper = float(loss_fn(base))
            base[name].reshape(-1)[index] = original - h
            lower = float(loss_fn(base))
            base[name].reshape(-1)[index] = original
            flat[index] = (upper - lower) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(1, |a|, |b|) over elements"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0:
        return 0.0
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))


def autodiff_grad(
    loss_builder: Callable[[Dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    names: Optional[Sequence[str]] = None,
) -> Dict[str, np.ndarray]:
    """Gradient of ``loss_builder`` through the tape, keyed by parameter name"""
    record = ComputationRecord()
    with record:
        bound = record.bind(params, names)
        loss = loss_builder(bound)
    return record.gradients_by_name(backward(record, loss))


@dataclass
class GradCheckRow:
    name: str
    error: float
    passed: bool


def gradient_check(
    loss_builder: Callable[[Dict[str, Tensor]], Tensor],
    params: Mapping[str, np.ndarray],
    h: float = GRADCHECK_STEP,
    tolerance: float = GRADCHECK_TOLERANCE,
    names: Optional[Sequence[str]] = None,
) -> List[GradCheckRow]:
    """
    Compare backward() with central differences for each named parameter

    ``loss_builder`` must be deterministic: fix every random draw outside it.
    """
    names = list(names or params)
    analytic = autodiff_grad(loss_builder, params, names)

    def loss_fn(values: Dict[str, np.ndarray]) -> float:
        return loss_builder({k: Tensor(v, name=k) for k, v in values.items()}).item()

    numeric = finite_diff_grad(loss_fn, params, h, names)
    rows = []
    for name in names:
        error = relative_error(analytic[name], numeric[name])
        rows.append(GradCheckRow(name, error, error < tolerance))
    return rows
