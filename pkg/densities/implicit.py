"""
Implicit (nonparametric) samplers x = f_vf(parents, eps)

These are sample generators only; their density is never evaluated.
"""

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from config.settings import GENERATOR_ACTIVATION, GENERATOR_HIDDEN
from core.errors import ConfigurationError, ShapeError
from core.nn import init_mlp, mlp_forward, mlp_layers, mlp_sizes
from core.tensor import Tensor, as_tensor, concat
from densities.explicit import ParamMap, SlotLayout

NOISE_KINDS = ("normal", "uniform")


@dataclass(frozen=True)
class ImplicitSampler:
    """
    Noise-injection network

    Args:
        dim: output width (the target variable's width)
        prefix: parameter name prefix
        parent_slots: conditioning layout
        noise_dim: width of eps (0 -> defaults to dim)
        noise: base distribution of eps, normal or uniform on [0, 1)
        hidden: hidden layer sizes; empty gives a single affine map
    """

    dim: int
    prefix: str
    parent_slots: Tuple[SlotLayout, ...] = ()
    noise_dim: int = 0
    noise: str = "normal"
    hidden: Tuple[int, ...] = GENERATOR_HIDDEN
    activation: str = GENERATOR_ACTIVATION
    trainable: bool = True

    def __post_init__(self):
        if self.noise not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise '{self.noise}' (choose from {NOISE_KINDS})")

    @property
    def parent_dim(self) -> int:
        return sum(slot.width for slot in self.parent_slots)

    @property
    def eps_dim(self) -> int:
        return self.noise_dim or self.dim

    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        sizes = mlp_sizes(self.parent_dim + self.eps_dim, self.hidden, self.dim)
        return init_mlp(sizes, rng, f"{self.prefix}.net")

    def param_names(self, params: Mapping[str, object]) -> List[str]:
        return [name for name in params if name.startswith(self.prefix + ".")]

    def draw_noise(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        if self.noise == "uniform":
            return rng.uniform(size=(batch, self.eps_dim))
        return rng.standard_normal((batch, self.eps_dim))

    def transform(self, params: ParamMap, parents: Optional[Tensor], noise: np.ndarray) -> Tensor:
        """f_vf(parents, eps): deterministic given its inputs"""
        eps = Tensor(noise)
        if self.parent_dim:
            if parents is None or parents.shape[-1] != self.parent_dim:
                got = () if parents is None else parents.shape
                raise ShapeError(f"{self.prefix}.transform", (eps.shape[0], self.parent_dim), got)
            inputs = concat([as_tensor(parents), eps])
        else:
            inputs = eps
        return mlp_forward(mlp_layers(params, f"{self.prefix}.net"), self.activation, inputs)


def sample_implicit(
    sampler: ImplicitSampler,
    parents=None,
    params: Optional[ParamMap] = None,
    rng: Optional[np.random.Generator] = None,
    batch: Optional[int] = None,
    noise: Optional[np.ndarray] = None,
) -> Tensor:
    """
    x = f_vf(parents, eps) with fresh eps (or the given ``noise``)

    Differentiable with respect to the network parameters and the parents.
    """
    parents = None if parents is None else as_tensor(parents)
    if noise is None:
        rows = batch if batch is not None else (parents.shape[0] if parents is not None else 1)
        noise = sampler.draw_noise(rng, rows)
    return sampler.transform(params or {}, parents, noise)
