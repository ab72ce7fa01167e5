"""
d-separation queries on a ModelGraph

``d_separated`` runs Bayes-ball reachability; ``d_separated_bruteforce``
enumerates every simple undirected path and is kept as a cross-check.
"""

from typing import FrozenSet, Iterable, Set, Tuple, Union

import networkx as nx

from core.errors import GraphError
from graph.model_graph import ModelGraph

NodeSet = Union[str, Iterable[str]]

_UP = "up"      # ball arrived from a child
_DOWN = "down"  # ball arrived from a parent


def _as_set(graph: ModelGraph, nodes: NodeSet) -> FrozenSet[str]:
    if isinstance(nodes, str):
        nodes = (nodes,)
    out = frozenset(nodes)
    for n in out:
        graph.variable(n)
    return out


def reachable(graph: ModelGraph, sources: NodeSet, given: NodeSet = ()) -> Set[str]:
    """
    Variables with an active trail from ``sources`` given ``given``

    Returns:
        set of reachable, unconditioned variables (sources included)
    """
    sources = _as_set(graph, sources)
    given = _as_set(graph, given)
    shaded = set(given) | set(graph.ancestors(given))

    visited: Set[Tuple[str, str]] = set()
    found: Set[str] = set()
    schedule = [(node, _UP) for node in sorted(sources)]
    while schedule:
        node, direction = schedule.pop()
        if (node, direction) in visited:
            continue
        visited.add((node, direction))
        if node not in given:
            found.add(node)

        if direction == _UP and node not in given:
            schedule.extend((p, _UP) for p in graph.parents(node))
            schedule.extend((c, _DOWN) for c in graph.children(node))
        elif direction == _DOWN:
            if node not in given:
                schedule.extend((c, _DOWN) for c in graph.children(node))
            if node in shaded:
                # collider with an observed descendant opens
                schedule.extend((p, _UP) for p in graph.parents(node))
    return found


def d_separated(graph: ModelGraph, a: NodeSet, b: NodeSet, given: NodeSet = ()) -> bool:
    """
    True when every trail between ``a`` and ``b`` is blocked by ``given``

    Conditioned members of ``a`` or ``b`` are separated trivially.

    Raises:
        UnknownVariableError: a name is not declared
        GraphError: a and b name the same variable
    """
    a_set = _as_set(graph, a)
    b_set = _as_set(graph, b)
    given_set = _as_set(graph, given)
    if a_set & b_set:
        raise GraphError(f"d-separation query needs disjoint sets, both contain {sorted(a_set & b_set)}")
    a_set = a_set - given_set
    b_set = b_set - given_set
    if not a_set or not b_set:
        return True
    return not (reachable(graph, a_set, given_set) & b_set)


def _path_active(graph: ModelGraph, path, given: FrozenSet[str], opened: FrozenSet[str]) -> bool:
    for prev, node, nxt in zip(path[:-2], path[1:-1], path[2:]):
        parents = graph.parents(node)
        collider = prev in parents and nxt in parents
        if collider and node not in opened:
            return False
        if not collider and node in given:
            return False
    return True


def d_separated_bruteforce(graph: ModelGraph, a: str, b: str, given: NodeSet = ()) -> bool:
    """Exhaustive check over all simple undirected paths (desk-scale graphs only)"""
    given_set = _as_set(graph, given)
    graph.variable(a)
    graph.variable(b)
    if a == b:
        raise GraphError(f"d-separation query needs two distinct variables, got '{a}' twice")
    if a in given_set or b in given_set:
        return True
    opened = frozenset(given_set | graph.ancestors(given_set))
    skeleton = graph.to_networkx().to_undirected()
    for path in nx.all_simple_paths(skeleton, a, b):
        if _path_active(graph, path, given_set, opened):
            return False
    return True
