"""
Explicit and adversarial variational objectives

  elbo                      E_q[log p(x, z) - log q(z | x)]
  kl_tractable_objective    E_q[log p(x | z)] - E_q[log((1 - D_z) / D_z)]
  kl_intractable_objective  E_q[log(D_z / (1 - D_z)) + log(D_x / (1 - D_x))]
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence

import numpy as np

from adversary.local import ratio_log
from adversary.optimal import AnalyticDiscriminator
from config.settings import GRADCHECK_STEP
from core.errors import ConfigurationError
from core.gradcheck import finite_diff_grad
from core.tensor import Tensor, as_tensor, concat
from densities.explicit import ExplicitFamily, ParamMap, normal_kl
from densities.implicit import ImplicitSampler
from graph.families import CompiledModel
from graph.sampling import JointSample, NoiseBag, draw_noise, inference_sample, network_input


def factor_log_prob(model: CompiledModel, theta: ParamMap, joint: JointSample, variables: Iterable[str]) -> Tensor:
    """Per-row sum of log p(x_v | pa(x_v)) over ``variables``"""
    graph = model.graph
    total: Optional[Tensor] = None
    for name in variables:
        family = model.generative[name]
        if isinstance(family, ImplicitSampler):
            raise ConfigurationError(
                f"factor '{name}' is implicit and has no density; use admp-kl-tractable or admp-kl-intractable"
            )
        parents = graph.parents(name)
        parent_values = concat([joint[p] for p in parents]) if parents else None
        term = family.distribution(theta, parent_values, joint.count).log_prob(joint[name])
        total = term if total is None else total + term
    return total if total is not None else Tensor(np.zeros(joint.count))


def _q_distribution(model: CompiledModel, phi: ParamMap, joint: JointSample, name: str, given: Sequence[str]):
    network = model.inference[name]
    if isinstance(network, ImplicitSampler):
        raise ConfigurationError(f"inference network for '{name}' is implicit and has no density")
    inputs = network_input(network, joint.values, given, joint.count)
    return network.distribution(phi, inputs, joint.count)


def _analytic_kl_ok(model: CompiledModel, name: str) -> bool:
    prior = model.generative[name]
    q = model.inference[name]
    return (
        not model.graph.parents(name)
        and isinstance(prior, ExplicitFamily) and prior.family == "gaussian"
        and isinstance(q, ExplicitFamily) and q.family == "gaussian"
    )


def elbo_rows(
    model: CompiledModel,
    theta: ParamMap,
    phi: ParamMap,
    joint: JointSample,
    inverse=None,
    analytic_kl: bool = True,
) -> Tensor:
    """
    Per-row ELBO integrand on a bottom-up joint

    Root Gaussian latents with a Gaussian q use the closed-form KL.
    """
    inverse = inverse or model.inverse
    closed = [n for n in inverse.order if analytic_kl and _analytic_kl_ok(model, n)]
    sampled = [n for n in model.graph.topological_order if n not in closed]
    rows = factor_log_prob(model, theta, joint, sampled)
    for name in inverse.order:
        q = _q_distribution(model, phi, joint, name, inverse.conditioning[name])
        if name in closed:
            prior = model.generative[name].distribution(theta, None, joint.count)
            rows = rows - normal_kl(q, prior)
        else:
            rows = rows - q.log_prob(joint[name])
    return rows


def elbo(
    model: CompiledModel,
    theta: ParamMap,
    phi: ParamMap,
    observations: Mapping[str, object],
    count: int,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[NoiseBag] = None,
    analytic_kl: bool = True,
) -> Tensor:
    """
    Monte-Carlo ELBO averaged over data and ``count`` particles per datum

    Raises:
        ConfigurationError: an implicit factor or implicit q is present
    """
    implicit = [n for n in model.graph.names if isinstance(model.generative[n], ImplicitSampler)]
    if implicit:
        raise ConfigurationError(
            f"elbo needs explicit factors, {implicit} are implicit; use admp-kl-tractable or admp-kl-intractable"
        )
    joint = inference_sample(model.inverse, phi, observations, count, rng, model.inference, noise)
    return elbo_rows(model, theta, phi, joint, analytic_kl=analytic_kl).mean()


def kl_tractable_objective(
    bottom_up: JointSample,
    adversary,
    xi: ParamMap,
    log_likelihood: Tensor,
) -> Tensor:
    """
    E_q[log p(x | z)] - E_q[log((1 - D_z) / D_z)], to be maximized

    D_z classifies prior latents (label 1) against inferred latents (label 0)
    over the (z, x) tuple, so log((1 - D_z) / D_z) = -logit.
    """
    tuples = bottom_up.tuple_for(adversary.slots)
    kl_rows = ratio_log(adversary, xi, tuples, "q_over_p")
    return as_tensor(log_likelihood).mean() - kl_rows.mean()


def kl_intractable_objective(bottom_up: JointSample, d_z, d_x, xi: ParamMap) -> Tensor:
    """
    Joint KL(q(x, z) || p(x, z)) estimate, to be minimized

    Both adversaries put label 1 on the inference side, so each logit is
    log(D / (1 - D)).
    """
    z_rows = ratio_log(d_z, xi, bottom_up.tuple_for(d_z.slots), "p_over_q")
    x_rows = ratio_log(d_x, xi, bottom_up.tuple_for(d_x.slots), "p_over_q")
    return (z_rows + x_rows).mean()


def kl_intractable_generator_rows(reconstruction: JointSample, d_x, xi: ParamMap) -> Tensor:
    """-logit of D_x on reconstructions: the likelihood factors learn to pass as data"""
    return -ratio_log(d_x, xi, reconstruction.tuple_for(d_x.slots), "p_over_q")


# ------------------------------------------------------------------
# MIXED OBJECTIVE CHECK
# ------------------------------------------------------------------
@dataclass
class MixedEquivalenceReport:
    l_elbo: float
    l_kl: float
    difference: float
    data_term: float
    grad_elbo: Dict[str, np.ndarray] = field(default_factory=dict)
    grad_kl: Dict[str, np.ndarray] = field(default_factory=dict)
    cosine: float = float("nan")

    @property
    def agrees(self) -> bool:
        return self.cosine > 0.99


def _cosine(a: Dict[str, np.ndarray], b: Dict[str, np.ndarray]) -> float:
    va = np.concatenate([a[k].reshape(-1) for k in sorted(a)]) if a else np.zeros(0)
    vb = np.concatenate([b[k].reshape(-1) for k in sorted(b)]) if b else np.zeros(0)
    na, nb = np.linalg.norm(va), np.linalg.norm(vb)
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(va @ vb / (na * nb))


def mixed_equivalence_check(
    model: CompiledModel,
    theta: Mapping[str, np.ndarray],
    phi: Mapping[str, np.ndarray],
    observations: Mapping[str, np.ndarray],
    data_log_density: Callable[[np.ndarray], np.ndarray],
    count: int,
    rng: np.random.Generator,
    h: float = GRADCHECK_STEP,
) -> MixedEquivalenceReport:
    """
    Compare L_ELBO with L_KL, where -E_q[log p(x|z)] is replaced by
    -E_q[log((1 - D_x) / D_x)] and D_x = q(x) / (q(x) + p(x|z)) is analytic

    Both losses share one noise bag. Their difference is E_q[log q(x)],
    independent of theta, so the theta-gradients agree.

    Args:
        data_log_density: log q(x) of the data distribution, rows of the observed tuple
    """
    observed = list(model.inverse.observed)
    latents = list(model.inverse.order)
    batch = np.asarray(observations[observed[0]]).shape[0]
    noise = draw_noise(model.inference, batch * count, rng, model.inverse.order)
    names = [n for group in model.theta_names(theta).values() for n in group]

    joint = inference_sample(model.inverse, phi, observations, count, None, model.inference, noise)

    def losses(params_theta: Mapping[str, np.ndarray]):
        x_tuples = joint.tuple_for(observed).values
        prior_terms = factor_log_prob(model, params_theta, joint, latents)
        q_terms = Tensor(np.zeros(joint.count))
        for name in latents:
            q = _q_distribution(model, phi, joint, name, model.inverse.conditioning[name])
            q_terms = q_terms + q.log_prob(joint[name])
        kl_rows = q_terms - prior_terms
        log_lik = factor_log_prob(model, params_theta, joint, observed).values

        d_x = AnalyticDiscriminator(
            log_p=lambda _t: data_log_density(x_tuples),
            log_q=lambda _t: log_lik,
            slots=observed,
            name="x",
        )
        ratio = ratio_log(d_x, {}, x_tuples, "q_over_p").values
        l_elbo = float(np.mean(-log_lik + kl_rows.values))
        l_kl = float(np.mean(-ratio + kl_rows.values))
        return l_elbo, l_kl, float(np.mean(data_log_density(x_tuples)))

    l_elbo, l_kl, data_term = losses(theta)
    grad_elbo = finite_diff_grad(lambda p: losses(p)[0], theta, h, names)
    grad_kl = finite_diff_grad(lambda p: losses(p)[1], theta, h, names)
    return MixedEquivalenceReport(
        l_elbo=l_elbo,
        l_kl=l_kl,
        difference=l_kl - l_elbo,
        data_term=data_term,
        grad_elbo=grad_elbo,
        grad_kl=grad_kl,
        cosine=_cosine(grad_elbo, grad_kl),
    )
