"""
Top-down (ancestral) and bottom-up (inference) joint sampling
"""

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence

import numpy as np

from core.errors import SamplingError
from core.tensor import Tensor, as_tensor, concat, concat_rows
from densities.explicit import ExplicitFamily, ParamMap, sample_explicit
from densities.implicit import ImplicitSampler, sample_implicit
from graph.families import PRESENCE_SUFFIX, Family, compile_generative
from graph.inverse import InverseFactorization
from graph.model_graph import ModelGraph

NoiseBag = Dict[str, np.ndarray]


@dataclass
class JointSample:
    """
    Full joint assignments, one row per sample

    ``log_probs`` holds log p(x | pa) for discrete top-down draws, the
    terms a score-function gradient needs.
    """

    values: Dict[str, Tensor]
    count: int
    origin: str = "top_down"
    log_probs: Dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self.values[name]
        except KeyError:
            raise SamplingError(f"joint sample has no value for '{name}'") from None

    def __contains__(self, name: str) -> bool:
        return name in self.values

    def tuple_for(self, slots: Sequence[str]) -> Tensor:
        """Concatenated values of ``slots``, the adversary input layout"""
        return concat([self[s] for s in slots])

    def detach(self) -> "JointSample":
        return JointSample({k: v.detach() for k, v in self.values.items()}, self.count, self.origin)

    def numpy(self) -> Dict[str, np.ndarray]:
        return {k: v.numpy() for k, v in self.values.items()}


def noise_for(family: Family, rows: int, rng: np.random.Generator) -> np.ndarray:
    """Base noise one draw of ``family`` consumes"""
    if isinstance(family, ImplicitSampler):
        return family.draw_noise(rng, rows)
    if family.family == "gaussian":
        return rng.standard_normal((rows, family.dim))
    if family.family == "bernoulli":
        return rng.uniform(size=(rows, family.dim))
    return rng.uniform(size=(rows, 1))


def draw_noise(families: Mapping[str, Family], rows: int, rng: np.random.Generator,
               order: Optional[Sequence[str]] = None) -> NoiseBag:
    """Per-variable noise for one chain; freezing it gives common random numbers"""
    names = families if order is None else order
    return {name: noise_for(families[name], rows, rng) for name in names}


def _draw(family: Family, parents: Optional[Tensor], params: ParamMap, rows: int, noise: np.ndarray) -> Tensor:
    if isinstance(family, ImplicitSampler):
        return sample_implicit(family, parents, params, batch=rows, noise=noise)
    return sample_explicit(family, parents, params, batch=rows, noise=noise)


def ancestral_sample(
    graph: ModelGraph,
    theta: ParamMap,
    count: int,
    rng: Optional[np.random.Generator] = None,
    families: Optional[Mapping[str, Family]] = None,
    noise: Optional[NoiseBag] = None,
) -> JointSample:
    """
    Draw ``count`` joints root-to-leaf, observation noise included

    Args:
        graph: model graph
        theta: generative parameters (arrays or bound tensors)
        count: K
        rng: generator (unused when ``noise`` covers every variable)
        families: compiled generative families (compiled from the graph if omitted)
        noise: fixed per-variable noise

    Returns:
        JointSample over every variable
    """
    families = families or compile_generative(graph)
    order = graph.topological_order
    if noise is None:
        noise = draw_noise(families, count, rng, order)
    values: Dict[str, Tensor] = {}
    log_probs: Dict[str, Tensor] = {}
    for name in order:
        family = families[name]
        parents = graph.parents(name)
        parent_values = concat([values[p] for p in parents]) if parents else None
        values[name] = _draw(family, parent_values, theta, count, noise[name])
        if isinstance(family, ExplicitFamily) and family.family != "gaussian":
            dist = family.distribution(theta, parent_values, count)
            log_probs[name] = dist.log_prob(values[name])
    return JointSample(values, count, "top_down", log_probs)


def network_input(family: Family, available: Mapping[str, Tensor], given: Sequence[str], rows: int) -> Optional[Tensor]:
    """
    Assemble a network input from its slot layout

    Slots outside ``given`` are zero-filled; presence slots carry 1 for
    given variables and 0 otherwise.
    """
    if not family.parent_slots:
        return None
    given = set(given)
    columns = []
    for slot in family.parent_slots:
        if slot.name.endswith(PRESENCE_SUFFIX):
            flag = 1.0 if slot.name[:-len(PRESENCE_SUFFIX)] in given else 0.0
            columns.append(Tensor(np.full((rows, 1), flag)))
        elif slot.name in given:
            columns.append(as_tensor(available[slot.name]))
        else:
            columns.append(Tensor(np.zeros((rows, slot.width))))
    return concat(columns)


def inference_sample(
    inverse: InverseFactorization,
    phi: ParamMap,
    observations: Mapping[str, object],
    count: int,
    rng: Optional[np.random.Generator] = None,
    networks: Optional[Mapping[str, Family]] = None,
    noise: Optional[NoiseBag] = None,
) -> JointSample:
    """
    Draw ``count`` bottom-up joints per datum through q(x_i | pa~(x_i))

    Rows are datum-major: datum b occupies rows [b*count, (b+1)*count).

    Raises:
        SamplingError: an observed variable is missing from ``observations``
    """
    if networks is None:
        raise SamplingError("inference_sample needs the compiled inference networks")
    for name in inverse.observed:
        if name not in observations:
            raise SamplingError(f"observation batch is missing observed variable '{name}'")

    batch = 0
    for name in inverse.observed:
        batch = np.asarray(as_tensor(observations[name]).values).shape[0]
        break
    rows = batch * count

    values: Dict[str, Tensor] = {}
    for name in inverse.observed:
        data = as_tensor(observations[name]).values
        values[name] = Tensor(np.repeat(data.reshape(batch, -1), count, axis=0))

    if noise is None:
        noise = draw_noise(networks, rows, rng, inverse.order)
    for name in inverse.order:
        network = networks[name]
        given = inverse.conditioning[name]
        inputs = network_input(network, values, given, rows)
        values[name] = _draw(network, inputs, phi, rows, noise[name])
    return JointSample(values, rows, "bottom_up")


def conditional_sample(
    graph: ModelGraph,
    theta: ParamMap,
    joint: JointSample,
    variables: Sequence[str],
    rng: Optional[np.random.Generator] = None,
    families: Optional[Mapping[str, Family]] = None,
    noise: Optional[NoiseBag] = None,
) -> JointSample:
    """
    Redraw ``variables`` from their generative factors given the rest of ``joint``

    Used for reconstructions x ~ p(x | z) with z from the bottom-up chain.
    """
    families = families or compile_generative(graph)
    chosen = [n for n in graph.topological_order if n in set(variables)]
    if noise is None:
        noise = draw_noise(families, joint.count, rng, chosen)
    values = dict(joint.values)
    log_probs: Dict[str, Tensor] = {}
    for name in chosen:
        family = families[name]
        parents = graph.parents(name)
        parent_values = concat([values[p] for p in parents]) if parents else None
        values[name] = _draw(family, parent_values, theta, joint.count, noise[name])
        if isinstance(family, ExplicitFamily) and family.family != "gaussian":
            log_probs[name] = family.distribution(theta, parent_values, joint.count).log_prob(values[name])
    return JointSample(values, joint.count, "reconstruction", log_probs)


def merge_samples(samples: Sequence[JointSample], origin: Optional[str] = None) -> JointSample:
    """Stack joints row-wise; variables missing from any part are dropped"""
    parts = [s for s in samples if s.count]
    if not parts:
        return JointSample({}, 0, origin or (samples[0].origin if samples else "bottom_up"))
    if len(parts) == 1:
        return parts[0]
    shared = [k for k in parts[0].values if all(k in p.values for p in parts)]
    values = {k: concat_rows([p.values[k] for p in parts]) for k in shared}
    log_shared = [k for k in parts[0].log_probs if all(k in p.log_probs for p in parts)]
    log_probs = {k: concat_rows([p.log_probs[k] for p in parts]) for k in log_shared}
    return JointSample(values, sum(p.count for p in parts), origin or parts[0].origin, log_probs)
