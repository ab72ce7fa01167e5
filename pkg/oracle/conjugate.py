"""
Closed-form posteriors for linear-Gaussian models
"""

import math
from dataclasses import dataclass
from typing import Mapping, Tuple, Union

import numpy as np

from core.errors import OracleError
from densities.explicit import ExplicitFamily
from graph.families import CompiledModel

ArrayLike = Union[float, np.ndarray]


def conjugate_gaussian_posterior(mu0: float, var0: float, noise_var: float, x: ArrayLike) -> Tuple[ArrayLike, float]:
    """
    Posterior of z ~ N(mu0, var0) after observing x ~ N(z, noise_var)

    Returns:
        (mean, variance); mean has the shape of ``x``

    Raises:
        OracleError: a variance is not strictly positive
    """
    return linear_gaussian_posterior(mu0, var0, 1.0, 0.0, noise_var, x)


def linear_gaussian_posterior(mu0: float, var0: float, weight: float, bias: float,
                              noise_var: float, x: ArrayLike) -> Tuple[ArrayLike, float]:
    """Posterior of z ~ N(mu0, var0) after observing x ~ N(weight * z + bias, noise_var)"""
    if var0 <= 0.0 or noise_var <= 0.0:
        raise OracleError(f"variances must be positive, got prior {var0} and noise {noise_var}")
    var_n = 1.0 / (1.0 / var0 + weight * weight / noise_var)
    mean_n = var_n * (mu0 / var0 + weight * (np.asarray(x, dtype=np.float64) - bias) / noise_var)
    return (float(mean_n) if np.ndim(mean_n) == 0 else mean_n), var_n


@dataclass(frozen=True)
class LinearGaussianOracle:
    """
    z ~ N(prior_mu, prior_var), x | z ~ N(weight * z + bias, noise_var), scalar z and x
    """

    latent: str
    observed: str
    prior_mu: float
    prior_var: float
    weight: float
    bias: float
    noise_var: float

    def posterior(self, x: ArrayLike) -> Tuple[ArrayLike, float]:
        return linear_gaussian_posterior(self.prior_mu, self.prior_var, self.weight, self.bias, self.noise_var, x)

    def posterior_affine(self) -> Tuple[float, float, float]:
        """(slope, intercept, std) with posterior mean = slope * x + intercept"""
        var_n = 1.0 / (1.0 / self.prior_var + self.weight ** 2 / self.noise_var)
        slope = var_n * self.weight / self.noise_var
        intercept = var_n * (self.prior_mu / self.prior_var - self.weight * self.bias / self.noise_var)
        return slope, intercept, math.sqrt(var_n)

    def log_evidence(self, x: ArrayLike) -> ArrayLike:
        """log N(x; weight * prior_mu + bias, weight^2 prior_var + noise_var)"""
        mean = self.weight * self.prior_mu + self.bias
        var = self.weight ** 2 * self.prior_var + self.noise_var
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (np.log(2.0 * np.pi * var) + (x - mean) ** 2 / var)

    def sample_posterior(self, x: float, count: int, rng: np.random.Generator) -> np.ndarray:
        mean, var = self.posterior(x)
        return mean + math.sqrt(var) * rng.standard_normal(count)

    def sample_data(self, count: int, rng: np.random.Generator) -> np.ndarray:
        z = self.prior_mu + math.sqrt(self.prior_var) * rng.standard_normal(count)
        return self.weight * z + self.bias + math.sqrt(self.noise_var) * rng.standard_normal(count)

    @classmethod
    def from_model(cls, model: CompiledModel, theta: Mapping[str, np.ndarray]) -> "LinearGaussianOracle":
        """
        Read the current prior and likelihood from a linear-Gaussian model

        Raises:
            OracleError: the model is not one scalar Gaussian latent with a linear Gaussian child
        """
        graph = model.graph
        latents = [n for n in graph.topological_order if n not in model.inverse.observed]
        observed = list(model.inverse.observed)
        if len(latents) != 1 or len(observed) != 1:
            raise OracleError(
                f"conjugate oracle needs one latent and one observed variable, got {latents} and {observed}"
            )
        z, x = latents[0], observed[0]
        if graph.parents(z) or graph.parents(x) != (z,):
            raise OracleError(f"conjugate oracle needs the structure {z} -> {x}")
        prior, likelihood = model.generative[z], model.generative[x]
        for name, family in ((z, prior), (x, likelihood)):
            if not (isinstance(family, ExplicitFamily) and family.family == "gaussian"
                    and family.source == "linear" and family.dim == 1):
                raise OracleError(f"factor '{name}' must be a scalar linear Gaussian for the conjugate oracle")

        def scalar(key: str) -> float:
            return float(np.asarray(theta[key]).reshape(-1)[0])

        return cls(
            latent=z,
            observed=x,
            prior_mu=scalar(f"{prior.prefix}.b"),
            prior_var=math.exp(2.0 * scalar(f"{prior.prefix}.log_scale")),
            weight=scalar(f"{likelihood.prefix}.W"),
            bias=scalar(f"{likelihood.prefix}.b"),
            noise_var=math.exp(2.0 * scalar(f"{likelihood.prefix}.log_scale")),
        )
