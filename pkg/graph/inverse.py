"""
Inverse factorization q(X) = prod_i q(x_i | pa~(x_i))

Latents are processed in reverse topological order. The conditioning set of
each latent is searched among the evidence and the latents already inverted,
seeded from its Markov blanket, grown until the latent is d-separated from
the remaining candidates, then pruned greedily.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from core.errors import GraphError
from graph.dseparation import d_separated
from graph.model_graph import ModelGraph, markov_blanket
from utils.logging_utils import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class InverseFactorization:
    """
    Derived inference structure

    Args:
        observed: evidence variables (no inverse factor)
        order: latent processing order
        conditioning: latent -> ordered pa~ set
        network_ids: latent -> inference network identifier
        warnings: non-fatal findings (disconnected latents, failed overrides)
    """

    observed: Tuple[str, ...]
    order: Tuple[str, ...]
    conditioning: Mapping[str, Tuple[str, ...]]
    network_ids: Mapping[str, str]
    warnings: Tuple[str, ...] = ()

    def inverse_parents(self, name: str) -> Tuple[str, ...]:
        return self.conditioning[name]

    @property
    def latents(self) -> Tuple[str, ...]:
        return self.order

    def inverse_graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.observed)
        g.add_nodes_from(self.order)
        for child, given in self.conditioning.items():
            for p in given:
                g.add_edge(p, child)
        return g

    def describe(self) -> str:
        """Human-readable form, e.g. 'q(z1|x), q(z2|z1)'"""
        terms = []
        for name in self.order:
            given = self.conditioning[name]
            terms.append(f"q({name}|{','.join(given)})" if given else f"q({name})")
        return ", ".join(terms)

    def table(self) -> List[Tuple[str, str, str]]:
        """(latent, pa~, network id) rows"""
        return [(n, ", ".join(self.conditioning[n]) or "-", self.network_ids[n]) for n in self.order]


def _candidates(observed: Sequence[str], processed: Sequence[str]) -> List[str]:
    return list(observed) + list(processed)


def separates(graph: ModelGraph, var: str, given: Iterable[str], candidates: Iterable[str]) -> bool:
    """Whether ``given`` d-separates ``var`` from the rest of ``candidates``"""
    given = set(given)
    rest = set(candidates) - given
    return not rest or d_separated(graph, var, rest, given)


def minimal_conditioning(graph: ModelGraph, var: str, candidates: Sequence[str]) -> Tuple[str, ...]:
    """
    Greedy minimal subset of ``candidates`` that d-separates ``var`` from the rest

    Ties are broken by topological index.
    """
    rank = graph.topo_index
    pool = sorted(set(candidates), key=rank)
    blanket = markov_blanket(graph, var)
    chosen = [c for c in pool if c in blanket]

    while not separates(graph, var, chosen, pool):
        rest = [c for c in pool if c not in chosen]
        connected = [c for c in rest if not d_separated(graph, var, c, chosen)]
        chosen.append(connected[0] if connected else rest[0])

    for member in sorted(chosen, key=rank, reverse=True):
        trial = [c for c in chosen if c != member]
        if separates(graph, var, trial, pool):
            chosen = trial
    return tuple(sorted(chosen, key=rank))


def _reaches_evidence(graph: ModelGraph, var: str, observed: Iterable[str]) -> bool:
    return bool(graph.descendants(var) & set(observed))


def _override_order(graph: ModelGraph, latents: Sequence[str], conditioning: Mapping[str, Tuple[str, ...]]) -> Tuple[str, ...]:
    """Order latents so every latent comes after its inverse parents"""
    default_rank = {name: i for i, name in enumerate(latents)}
    g = nx.DiGraph()
    g.add_nodes_from(latents)
    for child in latents:
        for p in conditioning[child]:
            if p in default_rank:
                g.add_edge(p, child)
    if not nx.is_directed_acyclic_graph(g):
        cycle = [u for u, _ in nx.find_cycle(g)]
        raise GraphError(f"inverse overrides form a cycle: {' -> '.join(cycle)}")
    return tuple(nx.lexicographical_topological_sort(g, key=default_rank.__getitem__))


def derive_inverse_factorization(
    graph: ModelGraph,
    observed: Optional[Iterable[str]] = None,
    overrides: Optional[Mapping[str, Sequence[str]]] = None,
) -> InverseFactorization:
    """
    Derive pa~ for every latent given the observed set

    Args:
        graph: validated model graph
        observed: evidence variables (default: the graph's observed role)
        overrides: latent -> user-specified pa~ (default: the graph's inverse blocks);
            overrides are only checked, and a failing check is a warning

    Returns:
        InverseFactorization
    """
    observed = tuple(graph.observed() if observed is None else observed)
    for name in observed:
        graph.variable(name)
    observed = tuple(sorted(set(observed), key=graph.topo_index))
    overrides = dict(graph.inverse_overrides if overrides is None else overrides)

    latents = tuple(n for n in reversed(graph.topological_order) if n not in observed)
    warnings: List[str] = []
    if not observed:
        warnings.append("no observed variables: all variables latent, top-down terms only")

    for name in latents:
        if observed and not _reaches_evidence(graph, name, observed):
            warnings.append(f"latent '{name}' has no directed path to any observed variable")

    conditioning: Dict[str, Tuple[str, ...]] = {}
    processed: List[str] = []
    usable_overrides = {k: tuple(v) for k, v in overrides.items() if k in latents}
    for name in overrides:
        if name not in latents:
            warnings.append(f"inverse override for '{name}' ignored: not a latent under this observation set")

    if usable_overrides:
        # derive defaults first, then overlay and re-order
        for name in latents:
            conditioning[name] = minimal_conditioning(graph, name, _candidates(observed, processed))
            processed.append(name)
        conditioning.update(usable_overrides)
        order = _override_order(graph, latents, conditioning)
        processed = []
        for name in order:
            candidates = _candidates(observed, processed)
            given = conditioning[name]
            if name in usable_overrides:
                outside = [g for g in given if g not in candidates]
                if outside or not separates(graph, name, given, candidates):
                    detail = f" (not yet available: {outside})" if outside else ""
                    warnings.append(f"inverse override q({name}|{','.join(given)}) fails the d-separation check{detail}")
            processed.append(name)
    else:
        for name in latents:
            conditioning[name] = minimal_conditioning(graph, name, _candidates(observed, processed))
            processed.append(name)
        order = latents

    for message in warnings:
        logger.warning("[graph] %s", message)

    return InverseFactorization(
        observed=observed,
        order=tuple(order),
        conditioning=conditioning,
        network_ids={name: f"phi.{name}" for name in order},
        warnings=tuple(warnings),
    )


def verify_inverse(graph: ModelGraph, inverse: InverseFactorization) -> List[str]:
    """
    Latents whose pa~ fails the d-separation check against the evidence and
    the latents processed before them
    """
    failures = []
    processed: List[str] = []
    for name in inverse.order:
        candidates = _candidates(inverse.observed, processed)
        given = inverse.conditioning[name]
        if any(g not in candidates for g in given) or not separates(graph, name, given, candidates):
            failures.append(name)
        processed.append(name)
    return failures
