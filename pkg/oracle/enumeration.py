"""
Exact tables for small discrete models

Every variable's states are enumerated (binary vectors or one-hot rows), the
factor tables are evaluated from the compiled families, and the joint is
assembled as a dense array with one axis per variable in topological order.
"""

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from config.settings import ENUMERATION_LIMIT
from core.errors import OracleError
from core.tensor import Tensor
from densities.explicit import ExplicitFamily
from graph.families import Family, compile_generative
from graph.model_graph import ModelGraph, VariableDecl
from objectives.variants import local_adversary_factors
from oracle.quadrature import discrete_jsd

NORMALIZATION_TOLERANCE = 1e-12


def variable_states(decl: VariableDecl) -> np.ndarray:
    """Encoded values a discrete variable can take, one row per state"""
    if decl.support == "binary":
        return np.array(list(itertools.product((0.0, 1.0), repeat=decl.dim)), dtype=np.float64)
    if decl.support == "categorical":
        return np.eye(decl.cardinality)
    raise OracleError(f"variable '{decl.name}' is real-valued and cannot be enumerated")


def joint_size(graph: ModelGraph) -> int:
    size = 1
    for name in graph.names:
        size *= len(variable_states(graph.variable(name)))
    return size


def broadcast_table(table: np.ndarray, axes: Sequence[int], ndim: int) -> np.ndarray:
    """Place a table whose axes are joint ``axes`` into an ndim-broadcastable array"""
    order = np.argsort(axes)
    moved = np.transpose(table, order)
    shape = [1] * ndim
    for position, axis in enumerate(sorted(axes)):
        shape[axis] = moved.shape[position]
    return moved.reshape(shape)


def factor_log_table(family: Family, child_states: np.ndarray, parent_states: Sequence[np.ndarray],
                     params: Mapping[str, np.ndarray]) -> np.ndarray:
    """
    log p(child | parents) for every parent configuration and child state

    Returns:
        array of shape (|pa_1|, ..., |pa_k|, |child|)
    """
    if not isinstance(family, ExplicitFamily):
        raise OracleError("enumeration needs explicit factors; implicit samplers have no table")
    counts = [len(s) for s in parent_states]
    configurations = list(itertools.product(*[range(c) for c in counts]))
    n_child = len(child_states)
    rows = len(configurations) * n_child
    if parent_states:
        parent_rows = np.concatenate(
            [np.concatenate([parent_states[j][config[j]] for j in range(len(counts))])[None, :]
             for config in configurations],
            axis=0,
        )
        parents = Tensor(np.repeat(parent_rows, n_child, axis=0))
    else:
        parents = None
    values = Tensor(np.tile(child_states, (len(configurations), 1)))
    log_p = family.distribution(params, parents, rows).log_prob(values).values
    return log_p.reshape(tuple(counts) + (n_child,))


@dataclass
class Enumeration:
    """Exact joint over every variable, axis order = ``names``"""

    names: Tuple[str, ...]
    states: Dict[str, np.ndarray]
    log_joint: np.ndarray
    factor_tables: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def joint(self) -> np.ndarray:
        return np.exp(self.log_joint)

    def axis(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise OracleError(f"no variable '{name}' in the enumeration") from None

    def marginal(self, names: Sequence[str], joint: Optional[np.ndarray] = None) -> np.ndarray:
        """Marginal table with axes in the order of ``names``"""
        return marginalize(self.joint if joint is None else joint, self.names, names)

    def conditional(self, child: str, given: Sequence[str]) -> np.ndarray:
        """p(child | given), axes (given..., child); rows of zero mass are left at zero"""
        table = self.marginal(list(given) + [child])
        norm = table.sum(axis=-1, keepdims=True)
        return np.divide(table, norm, out=np.zeros_like(table), where=norm > 0)

    def state_index(self, name: str, value) -> int:
        value = np.asarray(value, dtype=np.float64).reshape(-1)
        matches = np.flatnonzero(np.all(self.states[name] == value, axis=1))
        if not matches.size:
            raise OracleError(f"value {value.tolist()} is not a state of '{name}'")
        return int(matches[0])

    def log_evidence(self, observed: Mapping[str, int]) -> float:
        """log p(observed) with ``observed`` given as state indices"""
        index = tuple(observed.get(n, slice(None)) for n in self.names)
        return float(logsumexp(self.log_joint[index]))

    def posterior(self, observed: Mapping[str, int]) -> np.ndarray:
        """p(latents | observed) over the remaining axes, in ``names`` order"""
        index = tuple(observed.get(n, slice(None)) for n in self.names)
        sliced = self.log_joint[index]
        return np.exp(sliced - logsumexp(sliced))


def marginalize(joint: np.ndarray, names: Sequence[str], keep: Sequence[str]) -> np.ndarray:
    names = list(names)
    keep = list(keep)
    drop = tuple(i for i, n in enumerate(names) if n not in keep)
    table = joint.sum(axis=drop) if drop else joint
    remaining = [n for n in names if n in keep]
    return np.transpose(table, [remaining.index(n) for n in keep])


def enumerate_model(
    graph: ModelGraph,
    theta: Mapping[str, np.ndarray],
    families: Optional[Mapping[str, Family]] = None,
    limit: int = ENUMERATION_LIMIT,
) -> Enumeration:
    """
    Exact joint, factor tables and marginals by summation

    Raises:
        OracleError: joint larger than ``limit`` (message carries the size),
            a real-valued variable or an implicit factor
    """
    size = joint_size(graph)
    if size > limit:
        raise OracleError(f"joint has {size} configurations, above the enumeration limit {limit}")
    families = families or compile_generative(graph)
    names = graph.topological_order
    states = {n: variable_states(graph.variable(n)) for n in names}
    log_joint = np.zeros(tuple(len(states[n]) for n in names))
    tables: Dict[str, np.ndarray] = {}
    for name in names:
        parents = graph.parents(name)
        table = factor_log_table(families[name], states[name], [states[p] for p in parents], theta)
        tables[name] = np.exp(table)
        axes = [names.index(p) for p in parents] + [names.index(name)]
        log_joint = log_joint + broadcast_table(table, axes, len(names))
    total = float(np.exp(logsumexp(log_joint)))
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE * max(1, size):
        raise OracleError(f"enumerated joint sums to {total!r}, not 1")
    return Enumeration(tuple(names), states, log_joint, tables)


# ------------------------------------------------------------------
# EXACT OBJECTIVES
# ------------------------------------------------------------------
def exact_elbo(enumeration: Enumeration, observed: Mapping[str, int], q: np.ndarray) -> float:
    """
    sum_z q(z) [log p(x, z) - log q(z)] with 0 log 0 = 0

    Args:
        observed: state index per observed variable
        q: distribution over the remaining axes, in ``names`` order
    """
    index = tuple(observed.get(n, slice(None)) for n in enumeration.names)
    log_pxz = enumeration.log_joint[index]
    q = np.asarray(q, dtype=np.float64)
    if q.shape != log_pxz.shape:
        raise OracleError(f"q has shape {q.shape}, the latent table has {log_pxz.shape}")
    support = q > 0
    return float(np.sum(q[support] * (log_pxz[support] - np.log(q[support]))))


def exact_local_divergence(
    graph: ModelGraph,
    names: Sequence[str],
    p_joint: np.ndarray,
    q_joint: np.ndarray,
    factors: Optional[Sequence[str]] = None,
) -> Tuple[float, Dict[str, float]]:
    """
    Div_loc with Bayes-optimal discriminators: sum over adversary factors of
    JSD between the (x_i, pa(x_i)) marginals of the two joints

    Returns:
        (total, factor -> local JSD)
    """
    factors = list(factors) if factors is not None else local_adversary_factors(graph)
    terms = {}
    for name in factors:
        tuple_vars = [name] + list(graph.parents(name))
        terms[name] = discrete_jsd(marginalize(p_joint, names, tuple_vars), marginalize(q_joint, names, tuple_vars))
    return float(sum(terms.values())), terms


def random_tables(graph: ModelGraph, rng: np.random.Generator, concentration: float = 1.0) -> Dict[str, Tuple[float, ...]]:
    """
    Random conditional tables per variable, flattened for the FamilySpec 'probs' init

    Categorical rows are Dirichlet draws; binary rows hold P(bit = 1) per coordinate.
    """
    out = {}
    for name in graph.topological_order:
        decl = graph.variable(name)
        configurations = 1
        for parent in graph.parents(name):
            configurations *= len(variable_states(graph.variable(parent)))
        if decl.support == "binary":
            table = rng.uniform(0.05, 0.95, size=(configurations, decl.dim))
        else:
            table = rng.dirichlet(np.full(len(variable_states(decl)), concentration), size=configurations)
        out[name] = tuple(table.reshape(-1))
    return out


def joint_from_tables(graph: ModelGraph, tables: Mapping[str, np.ndarray],
                      names: Optional[Sequence[str]] = None) -> np.ndarray:
    """
    Dense joint from conditional probability tables

    Args:
        tables: variable -> array (|pa_1|, ..., |pa_k|, |x|) over the generative parents
        names: axis order (default: topological order)
    """
    names = list(names or graph.topological_order)
    shape = tuple(len(variable_states(graph.variable(n))) for n in names)
    joint = np.ones(shape)
    for name in names:
        axes = [names.index(p) for p in graph.parents(name)] + [names.index(name)]
        joint = joint * broadcast_table(np.asarray(tables[name], dtype=np.float64), axes, len(names))
    return joint


def conditional_tables(graph: ModelGraph, names: Sequence[str], joint: np.ndarray,
                       structure: Mapping[str, Sequence[str]]) -> Dict[str, np.ndarray]:
    """Conditionals p(x | structure[x]) read off a joint, for factor-equality checks"""
    out = {}
    for child, given in structure.items():
        table = marginalize(joint, names, list(given) + [child])
        norm = table.sum(axis=-1, keepdims=True)
        out[child] = np.divide(table, norm, out=np.zeros_like(table), where=norm > 0)
    return out


def list_observed_states(enumeration: Enumeration, observed: Sequence[str]) -> List[Dict[str, int]]:
    """Every joint configuration of the observed variables, as index dicts"""
    ranges = [range(len(enumeration.states[n])) for n in observed]
    return [dict(zip(observed, combo)) for combo in itertools.product(*ranges)]
