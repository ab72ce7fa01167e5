"""
Feed-forward networks on top of the tensor core
"""

from typing import Callable, Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from core.errors import ShapeError
from core.tensor import Tensor, as_tensor

Layer = Tuple[Tensor, Tensor]

ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    "identity": lambda x: x,
    "tanh": lambda x: x.tanh(),
    "relu": lambda x: x.relu(),
    "sigmoid": lambda x: x.sigmoid(),
    "softplus": lambda x: x.softplus(),
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation '{name}' (choose from {sorted(ACTIVATIONS)})") from None


def init_mlp(
    sizes: Sequence[int],
    rng: np.random.Generator,
    prefix: str,
    zero_output: bool = False,
) -> Dict[str, np.ndarray]:
    """
    Initialize an affine chain

    Weights are uniform in ±1/sqrt(fan_in), biases zero.

    Args:
        sizes: [input, hidden..., output]
        rng: generator
        prefix: parameter name prefix; layer l gets '{prefix}.{l}.W' and '{prefix}.{l}.b'
        zero_output: zero the last layer (network starts at a constant output)

    Returns:
        name -> array
    """
    params: Dict[str, np.ndarray] = {}
    n_layers = len(sizes) - 1
    for layer, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        if zero_output and layer == n_layers - 1:
            weight = np.zeros((fan_in, fan_out))
        else:
            bound = 1.0 / np.sqrt(max(fan_in, 1))
            weight = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        params[f"{prefix}.{layer}.W"] = weight
        params[f"{prefix}.{layer}.b"] = np.zeros(fan_out)
    return params


def mlp_layers(params: Mapping[str, Union[Tensor, np.ndarray]], prefix: str) -> List[Layer]:
    """Ordered (W, b) pairs stored under a prefix"""
    layers: List[Layer] = []
    layer = 0
    while f"{prefix}.{layer}.W" in params:
        layers.append((as_tensor(params[f"{prefix}.{layer}.W"]), as_tensor(params[f"{prefix}.{layer}.b"])))
        layer += 1
    if not layers:
        raise KeyError(f"no network parameters under '{prefix}'")
    return layers


def mlp_forward(
    layers: Sequence[Layer],
    activation_kind: str,
    x: Tensor,
    output_activation: str = "identity",
) -> Tensor:
    """
    Affine-activation chain; the last layer uses ``output_activation``

    Raises:
        ShapeError: consecutive layer dimensions do not match the input
    """
    hidden = activation(activation_kind)
    last = activation(output_activation)
    h = as_tensor(x)
    for index, (weight, bias) in enumerate(layers):
        if h.shape[-1] != weight.shape[0]:
            raise ShapeError(
                "mlp_forward", h.shape, weight.shape,
                detail=f"layer {index} expects {weight.shape[0]} inputs, got {h.shape[-1]}",
            )
        h = h @ weight + bias
        h = last(h) if index == len(layers) - 1 else hidden(h)
    return h


def mlp_sizes(input_dim: int, hidden: Sequence[int], output_dim: int) -> List[int]:
    return [input_dim, *hidden, output_dim]
