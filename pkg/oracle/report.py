"""
Posterior-recovery reports: learned inference networks against ground truth
"""

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from config.settings import ORACLE_GRID, REPORT_SAMPLES
from core.errors import OracleError
from core.tensor import Tensor
from densities.explicit import ExplicitFamily
from graph.families import CompiledModel
from graph.sampling import inference_sample, network_input
from objectives.mmd import mmd_rbf
from oracle.conjugate import LinearGaussianOracle
from oracle.enumeration import enumerate_model, list_observed_states
from oracle.quadrature import discrete_kl, gaussian_density, gaussian_grid, gaussian_kl, numeric_divergence
from utils.rng import make_rng

MMD_SAMPLES = 2000
ORACLE_KINDS = ("conjugate", "enumerable")


@dataclass(frozen=True)
class OracleSpec:
    """Oracle registration read from a model spec"""

    kind: str
    grid: tuple = ORACLE_GRID

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise OracleError(f"unknown oracle '{self.kind}' (choose from {ORACLE_KINDS})")


@dataclass
class PosteriorReport:
    kind: str
    rows: pd.DataFrame
    summary: Dict[str, float] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "summary": self.summary,
            "notes": self.notes,
            "rows": self.rows.to_dict(orient="records"),
        }


def _gaussian_q_moments(model: CompiledModel, phi: Mapping[str, np.ndarray], name: str,
                        values: Mapping[str, np.ndarray]) -> Optional[tuple]:
    """Exact (mean, std) of an explicit Gaussian q at one input, None for implicit q"""
    network = model.inference[name]
    if not (isinstance(network, ExplicitFamily) and network.family == "gaussian"):
        return None
    tensors = {k: Tensor(np.asarray(v, dtype=np.float64).reshape(1, -1)) for k, v in values.items()}
    inputs = network_input(network, tensors, model.inverse.conditioning[name], 1)
    dist = network.distribution(phi, inputs, 1)
    return float(dist.loc.values.reshape(-1)[0]), float(dist.scale.values.reshape(-1)[0])


def conjugate_report(model: CompiledModel, theta: Mapping[str, np.ndarray], phi: Mapping[str, np.ndarray],
                     grid: Sequence[float] = ORACLE_GRID, samples: int = REPORT_SAMPLES,
                     rng: Optional[np.random.Generator] = None) -> PosteriorReport:
    """Per grid observation: q moments and samples against the conjugate posterior"""
    oracle = LinearGaussianOracle.from_model(model, theta)
    rng = rng or make_rng(0)
    notes: List[str] = []
    rows = []
    for x in grid:
        observation = {oracle.observed: np.array([[float(x)]])}
        joint = inference_sample(model.inverse, phi, observation, samples, rng, model.inference)
        z = joint[oracle.latent].values.reshape(-1)
        post_mean, post_var = oracle.posterior(float(x))
        post_std = math.sqrt(post_var)

        moments = _gaussian_q_moments(model, phi, oracle.latent, {oracle.observed: observation[oracle.observed]})
        if moments is not None:
            q_mean, q_std = moments
            density = gaussian_density(q_mean, q_std)
            grid_z = gaussian_grid([q_mean, post_mean], [q_std, post_std])
            quad = numeric_divergence(density, gaussian_density(post_mean, post_std), "kl", grid_z)
            kl, kl_method = quad.value, "quadrature"
            if quad.warning:
                notes.append(f"x={x}: {quad.warning}")
        else:
            q_mean, q_std = float(z.mean()), float(z.std())
            kl, kl_method = gaussian_kl(q_mean, q_std ** 2, post_mean, post_var), "moment-matched"
            if "moment-matched" not in " ".join(notes):
                notes.append("implicit q: KL reported for the moment-matched Gaussian")

        reference = oracle.sample_posterior(float(x), min(samples, MMD_SAMPLES), rng)
        rows.append({
            "x": float(x),
            "q_mean": float(z.mean()),
            "q_std": float(z.std()),
            "posterior_mean": float(post_mean),
            "posterior_std": post_std,
            "mean_error": abs(float(z.mean()) - float(post_mean)),
            "std_error": abs(float(z.std()) - post_std),
            "kl": float(kl),
            "kl_method": kl_method,
            "mmd": mmd_rbf(z[:MMD_SAMPLES].reshape(-1, 1), reference.reshape(-1, 1)),
        })
    frame = pd.DataFrame(rows)
    summary = {
        "mean_error_max": float(frame["mean_error"].max()),
        "std_error_max": float(frame["std_error"].max()),
        "kl_mean": float(frame["kl"].mean()),
        "kl_max": float(frame["kl"].max()),
        "mmd_mean": float(frame["mmd"].mean()),
    }
    return PosteriorReport("conjugate", frame, summary, notes)


def enumerable_report(model: CompiledModel, theta: Mapping[str, np.ndarray], phi: Mapping[str, np.ndarray],
                      samples: int = REPORT_SAMPLES, rng: Optional[np.random.Generator] = None) -> PosteriorReport:
    """Per observed configuration: empirical q over latent states against the exact posterior"""
    enumeration = enumerate_model(model.graph, theta, model.generative)
    observed = list(model.inverse.observed)
    latents = [n for n in enumeration.names if n not in observed]
    rng = rng or make_rng(0)
    rows = []
    for config in list_observed_states(enumeration, observed):
        evidence = {n: enumeration.states[n][i][None, :] for n, i in config.items()}
        joint = inference_sample(model.inverse, phi, evidence, samples, rng, model.inference)
        posterior = enumeration.posterior(config)
        counts = np.zeros(posterior.shape)
        index = tuple(
            np.array([enumeration.state_index(n, row) for row in joint[n].values]) for n in latents
        )
        np.add.at(counts, index, 1.0)
        q = counts / counts.sum()
        rows.append({
            **{f"{n}": i for n, i in config.items()},
            "log_evidence": enumeration.log_evidence(config),
            "kl": discrete_kl(q, posterior),
            "total_variation": 0.5 * float(np.abs(q - posterior).sum()),
        })
    frame = pd.DataFrame(rows)
    summary = {
        "kl_mean": float(frame["kl"].mean()),
        "total_variation_max": float(frame["total_variation"].max()),
    }
    return PosteriorReport("enumerable", frame, summary, [])


def posterior_recovery_report(model: CompiledModel, theta: Mapping[str, np.ndarray], phi: Mapping[str, np.ndarray],
                              oracle: Optional[OracleSpec], samples: int = REPORT_SAMPLES,
                              rng: Optional[np.random.Generator] = None) -> PosteriorReport:
    """
    Compare the trained inference networks with the registered oracle

    Raises:
        OracleError: no oracle registered, or the model does not fit it
    """
    if oracle is None:
        raise OracleError("model spec registers no oracle; add an 'oracle' block (conjugate or enumerable)")
    if oracle.kind == "conjugate":
        return conjugate_report(model, theta, phi, oracle.grid, samples, rng)
    return enumerable_report(model, theta, phi, samples, rng)


def oracle_hook(oracle: OracleSpec, grid: Optional[Sequence[float]] = None) -> Callable:
    """
    Cheap per-metric-step oracle divergences for the trainer

    Explicit Gaussian q uses closed-form KL; other cases are skipped.
    """
    grid = tuple(grid or oracle.grid)

    def hook(model: CompiledModel, state) -> Dict[str, float]:
        if oracle.kind != "conjugate" or not state.phi:
            return {}
        truth = LinearGaussianOracle.from_model(model, state.theta)
        kls = []
        for x in grid:
            moments = _gaussian_q_moments(model, state.phi, truth.latent, {truth.observed: np.array([[x]])})
            if moments is None:
                return {}
            mean, var = truth.posterior(x)
            kls.append(gaussian_kl(moments[0], moments[1] ** 2, mean, var))
        return {"kl_mean": float(np.mean(kls)), "kl_max": float(np.max(kls))}

    return hook
