"""
Stochastic-gradient optimizers (functional: inputs are never mutated)
"""

from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Tuple

import numpy as np

from config.settings import ADAM_BETAS, ADAM_EPSILON
from core.errors import ShapeError

Params = Dict[str, np.ndarray]


@dataclass
class OptimizerState:
    """Adaptive-moment accumulators for one parameter group"""

    lr: float
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    epsilon: float = ADAM_EPSILON
    t: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    kind: str = "adam"

    def copy(self) -> "OptimizerState":
        return replace(
            self,
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
        )


def _check_aligned(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
    for name, g in grads.items():
        if name not in params:
            raise KeyError(f"gradient for unknown parameter '{name}'")
        if np.shape(g) != np.shape(params[name]):
            raise ShapeError(f"optimizer[{name}]", np.shape(params[name]), np.shape(g))


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> Tuple[Params, OptimizerState]:
    """
    One bias-corrected adaptive-moment update

    Args:
        params: name -> array
        grads: name -> gradient (subset of params; missing names are not updated)
        state: accumulators before the step

    Returns:
        (updated params, updated state); step count advances by exactly one
    """
    _check_aligned(params, grads)
    new_state = state.copy()
    new_state.t = state.t + 1
    bc1 = 1.0 - new_state.beta1 ** new_state.t
    bc2 = 1.0 - new_state.beta2 ** new_state.t

    new_params = dict(params)
    for name, g in grads.items():
        g = np.asarray(g, dtype=np.float64)
        m = new_state.m.get(name, np.zeros_like(g))
        v = new_state.v.get(name, np.zeros_like(g))
        m = new_state.beta1 * m + (1.0 - new_state.beta1) * g
        v = new_state.beta2 * v + (1.0 - new_state.beta2) * (g * g)
        new_state.m[name] = m
        new_state.v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = params[name] - new_state.lr * m_hat / (np.sqrt(v_hat) + new_state.epsilon)
    return new_params, new_state


def sgd_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> Tuple[Params, OptimizerState]:
    """Plain gradient descent with the state's learning rate"""
    _check_aligned(params, grads)
    new_params = dict(params)
    for name, g in grads.items():
        new_params[name] = params[name] - state.lr * np.asarray(g, dtype=np.float64)
    new_state = state.copy()
    new_state.t = state.t + 1
    return new_params, new_state


def optimizer_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> Tuple[Params, OptimizerState]:
    """Dispatch on ``state.kind``"""
    if state.kind == "sgd":
        return sgd_step(params, grads, state)
    return adam_step(params, grads, state)
