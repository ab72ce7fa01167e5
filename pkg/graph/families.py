"""
Compile declared factors and inference networks into density objects
"""

from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import GENERATOR_ACTIVATION, GENERATOR_HIDDEN, INFERENCE_ACTIVATION, INFERENCE_HIDDEN
from core.errors import ConfigurationError
from densities.explicit import ExplicitFamily, SlotLayout
from densities.implicit import ImplicitSampler
from graph.inverse import InverseFactorization
from graph.model_graph import FamilySpec, ModelGraph, VariableDecl

Family = Union[ExplicitFamily, ImplicitSampler]

PRESENCE_SUFFIX = "?"


def slot_for(decl: VariableDecl) -> SlotLayout:
    return SlotLayout(decl.name, decl.width, decl.support, decl.cardinality)


def presence_slot(name: str) -> SlotLayout:
    return SlotLayout(name + PRESENCE_SUFFIX, 1, "binary")


def default_family_name(decl: VariableDecl) -> str:
    return {"real": "gaussian", "binary": "bernoulli", "categorical": "categorical"}[decl.support]


def build_family(
    decl: VariableDecl,
    spec: FamilySpec,
    prefix: str,
    slots: Sequence[SlotLayout],
    hidden_default: Tuple[int, ...] = GENERATOR_HIDDEN,
    activation_default: str = GENERATOR_ACTIVATION,
) -> Family:
    """
    Turn one FamilySpec into an ExplicitFamily or ImplicitSampler

    Raises:
        ConfigurationError: the family does not match the variable's support
    """
    hidden = tuple(spec.hidden) if spec.hidden else hidden_default
    activation = spec.activation or activation_default
    if spec.implicit:
        if decl.discrete:
            raise ConfigurationError(
                f"variable '{decl.name}': implicit samplers produce real values, support is {decl.support}"
            )
        return ImplicitSampler(
            dim=decl.width, prefix=prefix, parent_slots=tuple(slots), noise_dim=spec.noise_dim,
            noise=spec.noise, hidden=hidden, activation=activation, trainable=spec.trainable,
        )
    expected = default_family_name(decl)
    family = spec.family or expected
    if family != expected:
        raise ConfigurationError(
            f"variable '{decl.name}': family '{family}' does not fit support '{decl.support}' (use {expected})"
        )
    return ExplicitFamily(
        family=family, dim=decl.width, prefix=prefix, parent_slots=tuple(slots),
        source=spec.source, hidden=hidden if spec.source == "mlp" else (), activation=activation,
        trainable=spec.trainable, init=spec.init_values,
    )


def compile_generative(graph: ModelGraph) -> Dict[str, Family]:
    """variable -> p(x | pa(x)) family, parameters under 'theta.<var>'"""
    families: Dict[str, Family] = {}
    for decl in graph.variable_decls:
        factor = graph.factor(decl.name)
        slots = [slot_for(graph.variable(p)) for p in factor.parents]
        families[decl.name] = build_family(decl, factor.spec, f"theta.{decl.name}", slots)
    return families


def default_inference_spec(decl: VariableDecl) -> FamilySpec:
    return FamilySpec(source="mlp", hidden=INFERENCE_HIDDEN, activation=INFERENCE_ACTIVATION)


def inference_slots(graph: ModelGraph, name: str, inverse: InverseFactorization, masked: bool) -> Tuple[SlotLayout, ...]:
    """
    Input layout of q(name | .)

    Unmasked: the pa~ values in order. Masked: every other variable in
    topological order followed by one presence flag per slot.
    """
    if not masked:
        return tuple(slot_for(graph.variable(p)) for p in inverse.conditioning[name])
    others = [n for n in graph.topological_order if n != name]
    return tuple(slot_for(graph.variable(n)) for n in others) + tuple(presence_slot(n) for n in others)


def compile_inference(
    graph: ModelGraph,
    inverse: InverseFactorization,
    masked: bool = False,
    variables: Optional[Iterable[str]] = None,
) -> Dict[str, Family]:
    """
    variable -> q(x | pa~(x)) network, parameters under 'phi.<var>'

    With ``masked`` every variable gets a network (an observed variable can be
    latent for a datum) over the slot-universe layout.
    """
    if variables is None:
        variables = graph.topological_order if masked else inverse.order
    networks: Dict[str, Family] = {}
    for name in variables:
        decl = graph.variable(name)
        spec = graph.inference.get(name) or default_inference_spec(decl)
        slots = inference_slots(graph, name, inverse, masked)
        if masked and not spec.implicit and spec.source == "table":
            raise ConfigurationError(f"inference network for '{name}': table sources are not supported under masking")
        networks[name] = build_family(decl, spec, f"phi.{name}", slots, INFERENCE_HIDDEN, INFERENCE_ACTIVATION)
    return networks


def init_params(families: Mapping[str, Family], rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Initial parameters for every family, in declaration order"""
    params: Dict[str, np.ndarray] = {}
    for family in families.values():
        params.update(family.init_params(rng))
    return params


def trainable_names(families: Mapping[str, Family], params: Mapping[str, object], variables: Optional[Iterable[str]] = None) -> Dict[str, list]:
    """variable -> names of its trainable parameters"""
    keys = families if variables is None else variables
    return {
        name: (families[name].param_names(params) if families[name].trainable else [])
        for name in keys
    }


class CompiledModel:
    """
    Generative families and inference networks of one graph/inverse pair

    Args:
        graph: model graph
        inverse: base inverse factorization
        masked: compile inference networks over the slot universe with presence flags
    """

    def __init__(self, graph: ModelGraph, inverse: InverseFactorization, masked: bool = False):
        self.graph = graph
        self.inverse = inverse
        self.masked = masked
        self.generative = compile_generative(graph)
        self.inference = compile_inference(graph, inverse, masked)

    def init_theta(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        return init_params(self.generative, rng)

    def init_phi(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        return init_params(self.inference, rng)

    def theta_names(self, theta: Mapping[str, object]) -> Dict[str, list]:
        return trainable_names(self.generative, theta)

    def phi_names(self, phi: Mapping[str, object]) -> Dict[str, list]:
        return trainable_names(self.inference, phi)

    def has_implicit(self, variables: Optional[Iterable[str]] = None) -> bool:
        names = self.graph.names if variables is None else variables
        return any(isinstance(self.generative[n], ImplicitSampler) for n in names)
