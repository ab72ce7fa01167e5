"""
Directed generative models p(X) = prod_i p(x_i | pa(x_i))
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from core.errors import CompletenessError, CycleError, GraphError, UnknownVariableError

ROLES = ("observed", "latent")
SUPPORTS = ("real", "binary", "categorical")


@dataclass(frozen=True)
class VariableDecl:
    name: str
    dim: int = 1
    role: str = "latent"
    support: str = "real"
    cardinality: int = 0  # categories, categorical support only

    @property
    def width(self) -> int:
        """Columns of the encoded value (one-hot for categorical)"""
        return self.cardinality if self.support == "categorical" else self.dim

    @property
    def discrete(self) -> bool:
        return self.support != "real"


@dataclass(frozen=True)
class FamilySpec:
    """Declarative description of a factor or inference network"""

    kind: str = "explicit"  # explicit | implicit
    family: str = ""  # empty -> chosen from the variable support
    source: str = "linear"
    hidden: Tuple[int, ...] = ()
    activation: str = "tanh"
    trainable: bool = True
    init: Tuple[Tuple[str, Tuple[float, ...]], ...] = ()
    noise_dim: int = 0
    noise: str = "normal"

    @property
    def init_values(self) -> Dict[str, Tuple[float, ...]]:
        return dict(self.init)

    @property
    def implicit(self) -> bool:
        return self.kind == "implicit"


@dataclass(frozen=True)
class FactorDecl:
    child: str
    parents: Tuple[str, ...] = ()
    spec: FamilySpec = field(default_factory=FamilySpec)


@dataclass
class ValidationReport:
    errors: List[GraphError] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def raise_first(self) -> None:
        if self.errors:
            raise self.errors[0]

    def __str__(self) -> str:
        return "ok" if self.ok else "; ".join(str(e) for e in self.errors)


class ModelGraph:
    """
    Variables, one factor per variable, and optional inference declarations

    Immutable after construction; structural problems are reported by
    ``validate`` rather than raised here.
    """

    def __init__(
        self,
        variables: Sequence[VariableDecl],
        factors: Sequence[FactorDecl],
        inference: Optional[Mapping[str, FamilySpec]] = None,
        inverse_overrides: Optional[Mapping[str, Sequence[str]]] = None,
        name: str = "model",
    ):
        self.name = name
        self.variable_decls: Tuple[VariableDecl, ...] = tuple(variables)
        self.factor_decls: Tuple[FactorDecl, ...] = tuple(factors)
        self.inference: Dict[str, FamilySpec] = dict(inference or {})
        self.inverse_overrides: Dict[str, Tuple[str, ...]] = {
            k: tuple(v) for k, v in (inverse_overrides or {}).items()
        }
        self._variables = {v.name: v for v in self.variable_decls}
        self._factors = {f.child: f for f in self.factor_decls}
        self._order: Optional[Tuple[str, ...]] = None

    # --- lookup ---
    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variable_decls)

    def variable(self, name: str) -> VariableDecl:
        try:
            return self._variables[name]
        except KeyError:
            raise UnknownVariableError(name) from None

    def factor(self, name: str) -> FactorDecl:
        self.variable(name)
        try:
            return self._factors[name]
        except KeyError:
            raise CompletenessError(name) from None

    def parents(self, name: str) -> Tuple[str, ...]:
        self.variable(name)
        factor = self._factors.get(name)
        return factor.parents if factor else ()

    def children(self, name: str) -> Tuple[str, ...]:
        self.variable(name)
        return tuple(f.child for f in self.factor_decls if name in f.parents)

    def observed(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variable_decls if v.role == "observed")

    def latents(self) -> Tuple[str, ...]:
        return tuple(v.name for v in self.variable_decls if v.role == "latent")

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.names)
        for f in self.factor_decls:
            for p in f.parents:
                g.add_edge(p, f.child)
        return g

    @property
    def topological_order(self) -> Tuple[str, ...]:
        """Topological order, ties broken by declaration order"""
        if self._order is None:
            g = self.to_networkx()
            if not nx.is_directed_acyclic_graph(g):
                raise CycleError([u for u, _ in nx.find_cycle(g)] + [nx.find_cycle(g)[0][0]])
            rank = {name: i for i, name in enumerate(self.names)}
            self._order = tuple(nx.lexicographical_topological_sort(g, key=rank.__getitem__))
        return self._order

    def topo_index(self, name: str) -> int:
        return self.topological_order.index(name)

    def descendants(self, name: str) -> FrozenSet[str]:
        self.variable(name)
        return frozenset(nx.descendants(self.to_networkx(), name))

    def ancestors(self, names: Iterable[str]) -> FrozenSet[str]:
        g = self.to_networkx()
        out = set()
        for n in names:
            self.variable(n)
            out |= nx.ancestors(g, n)
        return frozenset(out)

    def with_roles(self, observed: Iterable[str]) -> "ModelGraph":
        """Copy with the observed role moved to exactly ``observed``"""
        observed = set(observed)
        for n in observed:
            self.variable(n)
        variables = [
            VariableDecl(v.name, v.dim, "observed" if v.name in observed else "latent", v.support, v.cardinality)
            for v in self.variable_decls
        ]
        return ModelGraph(variables, self.factor_decls, self.inference, self.inverse_overrides, self.name)

    def structure(self) -> Tuple:
        """Hashable structural summary, used for round-trip equality"""
        return (
            self.name,
            self.variable_decls,
            self.factor_decls,
            tuple(sorted(self.inference.items())),
            tuple(sorted(self.inverse_overrides.items())),
        )

    def __eq__(self, other) -> bool:
        return isinstance(other, ModelGraph) and self.structure() == other.structure()

    def __hash__(self) -> int:
        return hash(self.structure())

    def __repr__(self) -> str:
        return f"ModelGraph({self.name!r}, variables={list(self.names)})"


# ------------------------------------------------------------------
# OPERATIONS
# ------------------------------------------------------------------
def validate(graph: ModelGraph) -> ValidationReport:
    """
    Check unique names, factor completeness, declared parents and acyclicity

    Returns:
        report whose ``ok`` is True when the graph is usable
    """
    report = ValidationReport()
    seen = set()
    for v in graph.variable_decls:
        if v.name in seen:
            report.errors.append(GraphError(f"duplicate variable name '{v.name}'"))
        seen.add(v.name)
        if v.role not in ROLES:
            report.errors.append(GraphError(f"variable '{v.name}': unknown role '{v.role}'"))
        if v.support not in SUPPORTS:
            report.errors.append(GraphError(f"variable '{v.name}': unknown support '{v.support}'"))
        if v.dim < 1:
            report.errors.append(GraphError(f"variable '{v.name}': dimension must be positive"))
        if v.support == "categorical" and (v.dim != 1 or v.cardinality < 2):
            report.errors.append(GraphError(f"variable '{v.name}': categorical needs dim 1 and k >= 2"))

    counts: Dict[str, int] = {}
    for f in graph.factor_decls:
        counts[f.child] = counts.get(f.child, 0) + 1
        if f.child not in seen:
            report.errors.append(UnknownVariableError(f.child))
        for p in f.parents:
            if p not in seen:
                report.errors.append(UnknownVariableError(p))
    for name in graph.names:
        if counts.get(name, 0) == 0:
            report.errors.append(CompletenessError(name))
        elif counts[name] > 1:
            report.errors.append(CompletenessError(name, f"{counts[name]} factors declared, expected one"))

    for name in list(graph.inference) + list(graph.inverse_overrides):
        if name not in seen:
            report.errors.append(UnknownVariableError(name))
    for name, given in graph.inverse_overrides.items():
        for g in given:
            if g not in seen:
                report.errors.append(UnknownVariableError(g))

    g = graph.to_networkx()
    try:
        cycle = nx.find_cycle(g)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        report.errors.append(CycleError([u for u, _ in cycle] + [cycle[0][0]]))
    return report


def markov_blanket(graph: ModelGraph, var: str) -> FrozenSet[str]:
    """Parents, children and co-parents of ``var``"""
    blanket = set(graph.parents(var))
    for child in graph.children(var):
        blanket.add(child)
        blanket.update(graph.parents(child))
    blanket.discard(var)
    return frozenset(blanket)


def to_dot(graph: ModelGraph, inverse=None) -> str:
    """Graphviz export; inverse edges are drawn dashed"""
    lines = [f'digraph "{graph.name}" {{']
    for v in graph.variable_decls:
        shape = "box" if v.role == "observed" else "ellipse"
        lines.append(f'  "{v.name}" [shape={shape}];')
    for f in graph.factor_decls:
        for p in f.parents:
            lines.append(f'  "{p}" -> "{f.child}";')
    if inverse is not None:
        for child in inverse.order:
            for p in inverse.conditioning[child]:
                lines.append(f'  "{p}" -> "{child}" [style=dashed, color=blue];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------
# PROGRAMMATIC CONSTRUCTION
# ------------------------------------------------------------------
class GraphBuilder:
    """Fluent builder: GraphBuilder().variable('z').factor('z').build()"""

    def __init__(self, name: str = "model"):
        self.name = name
        self._variables: List[VariableDecl] = []
        self._factors: List[FactorDecl] = []
        self._inference: Dict[str, FamilySpec] = {}
        self._overrides: Dict[str, Tuple[str, ...]] = {}

    def variable(self, name: str, dim: int = 1, role: str = "latent", support: str = "real",
                 cardinality: int = 0) -> "GraphBuilder":
        self._variables.append(VariableDecl(name, dim, role, support, cardinality))
        return self

    def factor(self, child: str, parents: Sequence[str] = (), spec: Optional[FamilySpec] = None) -> "GraphBuilder":
        self._factors.append(FactorDecl(child, tuple(parents), spec or FamilySpec()))
        return self

    def inference(self, name: str, spec: FamilySpec) -> "GraphBuilder":
        self._inference[name] = spec
        return self

    def override(self, name: str, given: Sequence[str]) -> "GraphBuilder":
        self._overrides[name] = tuple(given)
        return self

    def build(self, check: bool = True) -> ModelGraph:
        graph = ModelGraph(self._variables, self._factors, self._inference, self._overrides, self.name)
        if check:
            validate(graph).raise_first()
        return graph


def two_layer_chain(dim_z2: int = 1, dim_z1: int = 1, dim_x: int = 1, binary_x: bool = False) -> ModelGraph:
    """z2 -> z1 -> x"""
    x_spec = FamilySpec(source="mlp", hidden=(32,))
    return (
        GraphBuilder("chain")
        .variable("z2", dim_z2)
        .variable("z1", dim_z1)
        .variable("x", dim_x, "observed", "binary" if binary_x else "real")
        .factor("z2", (), FamilySpec(trainable=False))
        .factor("z1", ("z2",), FamilySpec(source="mlp", hidden=(32,)))
        .factor("x", ("z1",), x_spec)
        .build()
    )


def state_space(steps: int = 3) -> ModelGraph:
    """z1 -> z2 -> ... -> zT with emissions z_t -> x_t"""
    builder = GraphBuilder("statespace")
    for t in range(1, steps + 1):
        builder.variable(f"z{t}")
    for t in range(1, steps + 1):
        builder.variable(f"x{t}", role="observed")
    for t in range(1, steps + 1):
        builder.factor(f"z{t}", (f"z{t - 1}",) if t > 1 else ())
        builder.factor(f"x{t}", (f"z{t}",))
    return builder.build()


def multifactorial(causes: int = 2) -> ModelGraph:
    """Independent latent causes c1..cn sharing one observed child"""
    builder = GraphBuilder("multifactorial")
    names = [f"c{i}" for i in range(1, causes + 1)]
    for n in names:
        builder.variable(n)
    builder.variable("x", role="observed")
    for n in names:
        builder.factor(n)
    builder.factor("x", tuple(names))
    return builder.build()
