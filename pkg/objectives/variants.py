"""
Learning variants and their adversary wiring

A variant fixes which discriminators exist, which sample streams feed their
label-1 and label-0 sides, and which parameter groups it trains.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

from core.errors import ConfigurationError
from densities.implicit import ImplicitSampler
from graph.families import CompiledModel

# sample streams the trainer produces per minibatch
TOP_DOWN = "top_down"          # ancestral joints, K rows
BOTTOM_UP = "bottom_up"        # inference joints, L rows per datum with evidence
DATA = "data"                  # observed variables of the minibatch
PRIOR = "prior"                # ancestral latents paired with the bottom-up evidence
RECONSTRUCTION = "reconstruction"  # x ~ p(x | z) with z from the bottom-up chain


class ObjectiveVariant(str, Enum):
    GAN = "gan"
    GLOBAL_BIADV = "global-biadv"
    ADMP_JSD_LOC = "admp-jsdloc"
    ADMP_KL_TRACTABLE = "admp-kl-tractable"
    ADMP_KL_INTRACTABLE = "admp-kl-intractable"
    ELBO = "elbo"

    @classmethod
    def parse(cls, text: str) -> "ObjectiveVariant":
        key = text.strip().lower().replace("_", "-")
        for variant in cls:
            if key in (variant.value, variant.name.lower().replace("_", "-")):
                return variant
        raise ConfigurationError(f"unknown variant '{text}' (choose from {[v.value for v in cls]})")

    @property
    def uses_phi(self) -> bool:
        return self is not ObjectiveVariant.GAN

    @property
    def uses_xi(self) -> bool:
        return self is not ObjectiveVariant.ELBO

    @property
    def adversarial(self) -> bool:
        return self.uses_xi


@dataclass(frozen=True)
class AdversaryWiring:
    """One discriminator: its tuple slots and the streams on each label side"""

    name: str
    slots: Tuple[str, ...]
    positive: str
    negative: str


@dataclass(frozen=True)
class UpdateUnit:
    """Parameters updated together, in the order xi, theta, phi"""

    name: str
    adversaries: Tuple[str, ...]
    theta_vars: Tuple[str, ...]
    phi_vars: Tuple[str, ...]


@dataclass(frozen=True)
class VariantProgram:
    variant: ObjectiveVariant
    adversaries: Tuple[AdversaryWiring, ...]
    units: Tuple[UpdateUnit, ...]
    streams: Tuple[str, ...]

    def adversary(self, name: str) -> AdversaryWiring:
        for wiring in self.adversaries:
            if wiring.name == name:
                return wiring
        raise KeyError(name)


def local_adversary_factors(model) -> List[str]:
    """Factors that get a local adversary: every factor with parents, plus childless roots

    Accepts a CompiledModel or a bare ModelGraph.
    """
    graph = getattr(model, "graph", model)
    return [
        name for name in graph.topological_order
        if graph.parents(name) or not graph.children(name)
    ]


def _require_continuous_latents(model: CompiledModel, variant: ObjectiveVariant) -> None:
    for name in model.inverse.order:
        if model.graph.variable(name).discrete:
            raise ConfigurationError(
                f"{variant.value}: latent '{name}' is discrete and would need a gradient through its sample; "
                "use a real-valued (Gaussian or implicit) latent"
            )


def _require_explicit(model: CompiledModel, variant: ObjectiveVariant, variables) -> None:
    for name in variables:
        if isinstance(model.generative[name], ImplicitSampler):
            raise ConfigurationError(
                f"{variant.value}: factor '{name}' is implicit and has no likelihood; "
                "use admp-kl-intractable or admp-jsdloc"
            )


def build_program(variant: ObjectiveVariant, model: CompiledModel) -> VariantProgram:
    """
    Wire a variant onto a compiled model

    Raises:
        ConfigurationError: the variant cannot train this model
    """
    graph = model.graph
    inverse = model.inverse
    observed = tuple(inverse.observed)
    latents = tuple(n for n in graph.topological_order if n not in observed)
    if not observed:
        raise ConfigurationError(f"{variant.value}: needs at least one observed variable")
    all_vars = graph.topological_order
    phi_vars = tuple(n for n in all_vars if n in model.inference) if variant.uses_phi else ()

    if variant is ObjectiveVariant.GAN:
        wiring = (AdversaryWiring("data", observed, DATA, TOP_DOWN),)
        units = (UpdateUnit("gan", ("data",), all_vars, ()),)
        return VariantProgram(variant, wiring, units, (DATA, TOP_DOWN))

    if variant is ObjectiveVariant.ELBO:
        _require_explicit(model, variant, all_vars)
        _require_continuous_latents(model, variant)
        for name in inverse.order:
            if isinstance(model.inference[name], ImplicitSampler):
                raise ConfigurationError(f"elbo: inference network for '{name}' is implicit and has no density")
        units = (UpdateUnit("elbo", (), all_vars, phi_vars),)
        return VariantProgram(variant, (), units, (BOTTOM_UP,))

    _require_continuous_latents(model, variant)

    if variant is ObjectiveVariant.GLOBAL_BIADV:
        wiring = (AdversaryWiring("joint", all_vars, TOP_DOWN, BOTTOM_UP),)
        units = (UpdateUnit("joint", ("joint",), all_vars, phi_vars),)
        return VariantProgram(variant, wiring, units, (TOP_DOWN, BOTTOM_UP))

    if variant is ObjectiveVariant.ADMP_JSD_LOC:
        wired = set(local_adversary_factors(model))
        wiring = tuple(
            AdversaryWiring(name, (name,) + graph.parents(name), TOP_DOWN, BOTTOM_UP)
            for name in all_vars if name in wired
        )
        units = tuple(
            UpdateUnit(name, (name,) if name in wired else (), (name,), (name,) if name in phi_vars else ())
            for name in all_vars
        )
        return VariantProgram(variant, wiring, units, (TOP_DOWN, BOTTOM_UP))

    if not latents:
        raise ConfigurationError(f"{variant.value}: needs at least one latent variable")
    pair_slots = latents + observed

    if variant is ObjectiveVariant.ADMP_KL_TRACTABLE:
        _require_explicit(model, variant, observed)
        wiring = (AdversaryWiring("z", pair_slots, PRIOR, BOTTOM_UP),)
        units = (UpdateUnit("z", ("z",), observed, phi_vars),)
        return VariantProgram(variant, wiring, units, (BOTTOM_UP, PRIOR))

    # ADMP_KL_INTRACTABLE: D_z labels flipped, D_x over (x, z)
    wiring = (
        AdversaryWiring("z", pair_slots, BOTTOM_UP, PRIOR),
        AdversaryWiring("x", observed + latents, BOTTOM_UP, RECONSTRUCTION),
    )
    units = (UpdateUnit("zx", ("z", "x"), observed, phi_vars),)
    return VariantProgram(variant, wiring, units, (BOTTOM_UP, PRIOR, RECONSTRUCTION))


def slot_widths(model: CompiledModel, slots) -> int:
    return sum(model.graph.variable(s).width for s in slots)


def describe_program(program: VariantProgram) -> Dict[str, List[str]]:
    """adversary -> ['slots', 'label-1 stream', 'label-0 stream'] for logs and manifests"""
    return {
        w.name: [",".join(w.slots), w.positive, w.negative]
        for w in program.adversaries
    }
