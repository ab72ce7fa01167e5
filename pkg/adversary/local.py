"""
Per-factor discriminators D_i over variable tuples

Label 1 is the top-down (model) side and label 0 the bottom-up (inference)
side. Every adversary exposes ``logits(params, tuples)``; the functions below
work on any object with that method, learned or analytic.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import (
    ADAM_BETAS,
    ADAM_EPSILON,
    DEFAULT_LR_XI,
    DISCRIMINATOR_ACTIVATION,
    DISCRIMINATOR_HIDDEN,
    LOGIT_CLAMP,
)
from core.errors import SamplingError, ShapeError
from core.nn import init_mlp, mlp_forward, mlp_layers, mlp_sizes
from core.optim import OptimizerState, optimizer_step
from core.tensor import ComputationRecord, Tensor, as_tensor, backward

DIRECTIONS = ("p_over_m", "q_over_m", "p_over_q", "q_over_p")


@dataclass(frozen=True)
class LocalAdversary:
    """
    Discriminator network over one slot layout

    Args:
        name: adversary id, parameters live under 'xi.<name>'
        slots: variables whose values are concatenated into the input
        input_dim: total input width, fixed from the graph
        hidden, activation: network shape
    """

    name: str
    slots: Tuple[str, ...]
    input_dim: int
    hidden: Tuple[int, ...] = DISCRIMINATOR_HIDDEN
    activation: str = DISCRIMINATOR_ACTIVATION

    @property
    def prefix(self) -> str:
        return f"xi.{self.name}"

    def init_params(self, rng: np.random.Generator, zero_output: bool = False) -> Dict[str, np.ndarray]:
        sizes = mlp_sizes(self.input_dim, self.hidden, 1)
        return init_mlp(sizes, rng, f"{self.prefix}.net", zero_output=zero_output)

    def param_names(self, params: Mapping[str, object]) -> List[str]:
        return [name for name in params if name.startswith(self.prefix + ".")]

    def logits(self, params: Mapping[str, object], tuples) -> Tensor:
        """Clamped logits, one per row"""
        x = as_tensor(tuples)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeError(f"discriminate[{self.name}]", x.shape, (x.shape[0] if x.ndim else 0, self.input_dim))
        out = mlp_forward(mlp_layers(params, f"{self.prefix}.net"), self.activation, x)
        return out.reshape(x.shape[0]).clamp(-LOGIT_CLAMP, LOGIT_CLAMP)


def discriminate(adv, params: Mapping[str, object], tuples) -> Tensor:
    """D(tuple) in (0, 1): probability the tuple came from the top-down chain"""
    return adv.logits(params, tuples).sigmoid()


def loss_locD(adv, params: Mapping[str, object], top_down, bottom_up) -> Tensor:
    """
    Binary cross-entropy: mean softplus(-l) over top-down + mean softplus(l) over bottom-up

    Raises:
        SamplingError: either sample set is empty
    """
    top_down = as_tensor(top_down)
    bottom_up = as_tensor(bottom_up)
    if top_down.shape[0] == 0 or bottom_up.shape[0] == 0:
        raise SamplingError(
            f"adversary '{getattr(adv, 'name', 'D')}' needs both sample sets, "
            f"got {top_down.shape[0]} top-down and {bottom_up.shape[0]} bottom-up rows"
        )
    positive = (-adv.logits(params, top_down)).softplus().mean()
    negative = adv.logits(params, bottom_up).softplus().mean()
    return positive + negative


def ratio_log(adv, params: Mapping[str, object], tuples, direction: str) -> Tensor:
    """
    Log-ratio transforms of the discriminator output, per row

    p_over_m -> log D, q_over_m -> log(1-D), p_over_q -> logit, q_over_p -> -logit.
    The m-directions are the classifier terms; the factor 2 relating them to
    p/m and q/m under m = (p+q)/2 is added by the divergence estimators.
    """
    logits = adv.logits(params, tuples)
    if direction == "p_over_m":
        return -(-logits).softplus()
    if direction == "q_over_m":
        return -logits.softplus()
    if direction == "p_over_q":
        return logits
    if direction == "q_over_p":
        return -logits
    raise ValueError(f"unknown ratio direction '{direction}' (choose from {DIRECTIONS})")


def discriminator_accuracy(adv, params: Mapping[str, object], top_down, bottom_up) -> float:
    """Fraction of rows on the correct side of D = 1/2"""
    top = adv.logits(params, as_tensor(top_down).detach()).values
    bottom = adv.logits(params, as_tensor(bottom_up).detach()).values
    hits = np.sum(top > 0.0) + np.sum(bottom < 0.0)
    total = top.size + bottom.size
    return float(hits / total) if total else float("nan")


def fit_adversary(
    adv: LocalAdversary,
    params: Mapping[str, np.ndarray],
    top_down: np.ndarray,
    bottom_up: np.ndarray,
    steps: int,
    lr: float = DEFAULT_LR_XI,
    state: Optional[OptimizerState] = None,
    batch: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Dict[str, np.ndarray], OptimizerState, List[float]]:
    """
    Train an adversary on two fixed sample sets

    Args:
        adv: the adversary
        params: parameter dict holding at least the adversary's parameters
        top_down, bottom_up: label-1 and label-0 tuples
        steps: optimizer steps
        lr: learning rate (ignored when ``state`` is given)
        state: optimizer state to continue from
        batch: minibatch rows per side (default: full batch)
        rng: generator for minibatch selection

    Returns:
        (updated params, optimizer state, per-step losses)
    """
    names = adv.param_names(params)
    params = {name: np.array(params[name]) for name in names}
    if state is None:
        state = OptimizerState(lr=lr, beta1=ADAM_BETAS[0], beta2=ADAM_BETAS[1], epsilon=ADAM_EPSILON)
    top_down = np.asarray(top_down, dtype=np.float64)
    bottom_up = np.asarray(bottom_up, dtype=np.float64)
    losses: List[float] = []
    for _ in range(steps):
        pos, neg = top_down, bottom_up
        if batch is not None:
            pos = top_down[rng.integers(0, len(top_down), size=batch)]
            neg = bottom_up[rng.integers(0, len(bottom_up), size=batch)]
        record = ComputationRecord()
        with record:
            bound = record.bind(params)
            loss = loss_locD(adv, bound, pos, neg)
        grads = record.gradients_by_name(backward(record, loss))
        params, state = optimizer_step(params, grads, state)
        losses.append(loss.item())
    return params, state, losses
