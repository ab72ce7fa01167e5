"""
GAN value function V(D, G) = E_data[log D] + E_gen[log(1 - D)]
"""

from typing import Union

import numpy as np

from core.errors import SamplingError
from core.tensor import Tensor, as_tensor

Array = Union[Tensor, np.ndarray]


def gan_value(d_data: Array, d_gen: Array) -> float:
    """
    Monte-Carlo V from discriminator outputs (probabilities)

    Raises:
        SamplingError: an empty batch
    """
    d_data = np.asarray(as_tensor(d_data).values, dtype=np.float64).reshape(-1)
    d_gen = np.asarray(as_tensor(d_gen).values, dtype=np.float64).reshape(-1)
    if d_data.size == 0 or d_gen.size == 0:
        raise SamplingError("gan_value needs nonempty data and generated batches")
    return float(np.mean(np.log(d_data)) + np.mean(np.log1p(-d_gen)))


def gan_value_from_logits(l_data: Tensor, l_gen: Tensor) -> Tensor:
    """Same value written on logits with softplus, differentiable"""
    l_data = as_tensor(l_data)
    l_gen = as_tensor(l_gen)
    if l_data.shape[0] == 0 or l_gen.shape[0] == 0:
        raise SamplingError("gan_value needs nonempty data and generated batches")
    return -(-l_data).softplus().mean() - l_gen.softplus().mean()


def generator_rows(l_gen: Tensor, non_saturating: bool = False) -> Tensor:
    """
    Per-row generator loss

    Saturating: log(1 - D) = -softplus(l). Non-saturating: -log D = softplus(-l).
    """
    l_gen = as_tensor(l_gen)
    if non_saturating:
        return (-l_gen).softplus()
    return -l_gen.softplus()
