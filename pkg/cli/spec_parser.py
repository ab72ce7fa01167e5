"""
Model-spec text format

A spec is a sequence of blocks. A block header starts in column 1 with a
keyword and a name; the indented lines below it are ``key value`` pairs:

    model chain

    variable x
      dim 1
      role observed

    factor x
      parents z1
      source mlp
      hidden 32

    inverse z2
      given z1

    oracle conjugate
      grid -2,-1,0,1,2

    dataset lingauss
      noise 0.5

``#`` starts a comment. Lists are comma-separated; ``-`` is the empty list.
"""

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from config.settings import ORACLE_GRID
from core.errors import CompletenessError, CycleError, GraphError, OracleError, SpecParseError, UnknownVariableError
from densities.explicit import FAMILIES, SOURCES
from densities.implicit import NOISE_KINDS
from graph.model_graph import FactorDecl, FamilySpec, ModelGraph, VariableDecl, validate
from oracle.report import OracleSpec

BLOCKS = ("model", "variable", "factor", "inference", "inverse", "oracle", "dataset")
VARIABLE_KEYS = ("dim", "role", "support", "cardinality")
FAMILY_KEYS = ("kind", "family", "source", "hidden", "activation", "trainable", "init", "noise_dim", "noise")
FACTOR_KEYS = ("parents",) + FAMILY_KEYS
BLOCK_KEYS = {
    "model": (),
    "variable": VARIABLE_KEYS,
    "factor": FACTOR_KEYS,
    "inference": FAMILY_KEYS,
    "inverse": ("given",),
    "oracle": ("grid",),
}
EMPTY_LIST = "-"

_HEADER = re.compile(r"^(\S+)(?:\s+(\S+))?\s*(\S.*)?$")
_ENTRY = re.compile(r"^(\s+)(\S+)(?:\s+(.*\S))?\s*$")
_INIT_ITEM = re.compile(r"(\w+)=(\S+)")


@dataclass(frozen=True)
class DatasetSpec:
    """Named toy dataset with string options, interpreted by cli.datasets"""

    name: str
    params: Tuple[Tuple[str, str], ...] = ()

    @property
    def options(self) -> Dict[str, str]:
        return dict(self.params)


@dataclass
class ModelSpec:
    graph: ModelGraph
    oracle: Optional[OracleSpec] = None
    dataset: Optional[DatasetSpec] = None
    path: str = "<spec>"


@dataclass
class _Entry:
    key: str
    value: str
    line: int
    column: int  # column of the value (key column when the value is empty)
    key_column: int


@dataclass
class _Block:
    keyword: str
    name: str
    line: int
    entries: Dict[str, _Entry] = field(default_factory=dict)


# ------------------------------------------------------------------
# LEXING
# ------------------------------------------------------------------
def _strip_comment(text: str) -> str:
    return text.split("#", 1)[0].rstrip()


def _blocks(text: str, path: str) -> List[_Block]:
    blocks: List[_Block] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw.replace("\t", "    "))
        if not line.strip():
            continue
        if not line[0].isspace():
            match = _HEADER.match(line)
            keyword, name, extra = match.group(1), match.group(2), match.group(3)
            if keyword not in BLOCKS:
                raise SpecParseError(f"unknown block '{keyword}' (choose from {', '.join(BLOCKS)})", number, 1, path)
            if not name:
                raise SpecParseError(f"'{keyword}' needs a name", number, len(keyword) + 1, path)
            if extra:
                raise SpecParseError(f"unexpected text after '{keyword} {name}'", number, match.start(3) + 1, path)
            blocks.append(_Block(keyword, name, number))
            continue
        match = _ENTRY.match(line)
        key_column = len(match.group(1)) + 1
        if not blocks:
            raise SpecParseError("indented entry outside any block", number, key_column, path)
        block = blocks[-1]
        key, value = match.group(2), match.group(3) or ""
        allowed = BLOCK_KEYS.get(block.keyword)
        if allowed is not None and key not in allowed:
            choices = ", ".join(allowed) or "none"
            raise SpecParseError(f"'{block.keyword}' does not take '{key}' (keys: {choices})", number, key_column, path)
        if key in block.entries:
            raise SpecParseError(f"duplicate key '{key}' in '{block.keyword} {block.name}'", number, key_column, path)
        column = match.start(3) + 1 if match.group(3) else key_column
        block.entries[key] = _Entry(key, value, number, column, key_column)
    return blocks


# ------------------------------------------------------------------
# VALUES
# ------------------------------------------------------------------
def _fail(entry: _Entry, message: str, path: str) -> SpecParseError:
    return SpecParseError(f"{entry.key}: {message}", entry.line, entry.column, path)


def _int(entry: _Entry, path: str) -> int:
    try:
        return int(entry.value)
    except ValueError:
        raise _fail(entry, f"expected an integer, got '{entry.value}'", path) from None


def _names(entry: _Entry) -> Tuple[str, ...]:
    if entry.value.strip() in ("", EMPTY_LIST):
        return ()
    return tuple(item.strip() for item in entry.value.split(",") if item.strip())


def _ints(entry: _Entry, path: str) -> Tuple[int, ...]:
    try:
        return tuple(int(item) for item in _names(entry))
    except ValueError:
        raise _fail(entry, f"expected comma-separated integers, got '{entry.value}'", path) from None


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in text.split(",") if item.strip())


def _bool(entry: _Entry, path: str) -> bool:
    value = entry.value.lower()
    if value in ("true", "yes", "1"):
        return True
    if value in ("false", "no", "0"):
        return False
    raise _fail(entry, f"expected true or false, got '{entry.value}'", path)


def _init(entry: _Entry, path: str) -> Tuple[Tuple[str, Tuple[float, ...]], ...]:
    items = []
    position = 0
    for match in _INIT_ITEM.finditer(entry.value):
        if entry.value[position:match.start()].strip():
            break
        try:
            items.append((match.group(1), _floats(match.group(2))))
        except ValueError:
            column = entry.column + match.start(2)
            raise SpecParseError(f"init: '{match.group(2)}' is not a list of numbers", entry.line, column, path) from None
        position = match.end()
    if entry.value[position:].strip():
        column = entry.column + position + (len(entry.value[position:]) - len(entry.value[position:].lstrip()))
        raise SpecParseError("init: expected key=v1,v2,... items", entry.line, column, path)
    return tuple(items)


def _family(block: _Block, path: str) -> FamilySpec:
    entries = block.entries
    kwargs = {}
    for key in ("kind", "family", "source", "activation", "noise"):
        if key in entries:
            kwargs[key] = entries[key].value
    for key, choices in (("kind", ("explicit", "implicit")), ("family", FAMILIES),
                         ("source", SOURCES), ("noise", NOISE_KINDS)):
        if key in kwargs and kwargs[key] not in choices:
            raise _fail(entries[key], f"expected one of {', '.join(choices)}, got '{kwargs[key]}'", path)
    if "hidden" in entries:
        kwargs["hidden"] = _ints(entries["hidden"], path)
    if "trainable" in entries:
        kwargs["trainable"] = _bool(entries["trainable"], path)
    if "init" in entries:
        kwargs["init"] = _init(entries["init"], path)
    if "noise_dim" in entries:
        kwargs["noise_dim"] = _int(entries["noise_dim"], path)
    return FamilySpec(**kwargs)


def _variable(block: _Block, path: str) -> VariableDecl:
    entries = block.entries
    kwargs = {}
    for key in ("dim", "cardinality"):
        if key in entries:
            kwargs[key] = _int(entries[key], path)
    for key in ("role", "support"):
        if key in entries:
            kwargs[key] = entries[key].value
    return VariableDecl(block.name, **kwargs)


def _oracle(block: _Block, path: str) -> OracleSpec:
    grid = ORACLE_GRID
    entry = block.entries.get("grid")
    if entry is not None:
        try:
            grid = _floats(entry.value)
        except ValueError:
            raise _fail(entry, f"expected comma-separated numbers, got '{entry.value}'", path) from None
    try:
        return OracleSpec(block.name, grid)
    except OracleError as exc:
        raise SpecParseError(str(exc), block.line, len("oracle") + 2, path) from None


# ------------------------------------------------------------------
# PARSE / FORMAT
# ------------------------------------------------------------------
def _anchor(error: GraphError, blocks: List[_Block]) -> Tuple[int, int]:
    """Line and column of the block most related to a graph error"""
    name = None
    if isinstance(error, CompletenessError):
        name = error.variable
    elif isinstance(error, UnknownVariableError):
        for block in blocks:
            for key in ("parents", "given"):
                entry = block.entries.get(key)
                if entry and error.name in _names(entry):
                    return entry.line, entry.column + entry.value.find(error.name)
            if block.keyword in ("factor", "inference", "inverse") and block.name == error.name:
                return block.line, len(block.keyword) + 2
    elif isinstance(error, CycleError):
        name = error.cycle[0]
    for keyword in ("factor", "variable"):
        for block in blocks:
            if block.keyword == keyword and block.name == name:
                return block.line, 1
    return (blocks[0].line, 1) if blocks else (1, 1)


def parse_spec(text: str, path: str = "<spec>") -> ModelSpec:
    """
    Parse model-spec text into a validated graph plus oracle/dataset registrations

    Raises:
        SpecParseError: syntax, value or graph problems, anchored at line/column
    """
    blocks = _blocks(text, path)
    name = "model"
    variables: List[VariableDecl] = []
    factors: List[FactorDecl] = []
    inference: Dict[str, FamilySpec] = {}
    overrides: Dict[str, Tuple[str, ...]] = {}
    oracle: Optional[OracleSpec] = None
    dataset: Optional[DatasetSpec] = None
    seen_once: Dict[str, int] = {}

    for block in blocks:
        if block.keyword in ("model", "oracle", "dataset"):
            if block.keyword in seen_once:
                raise SpecParseError(
                    f"second '{block.keyword}' block (first on line {seen_once[block.keyword]})", block.line, 1, path
                )
            seen_once[block.keyword] = block.line
        if block.keyword == "model":
            name = block.name
        elif block.keyword == "variable":
            variables.append(_variable(block, path))
        elif block.keyword == "factor":
            parents = _names(block.entries["parents"]) if "parents" in block.entries else ()
            factors.append(FactorDecl(block.name, parents, _family(block, path)))
        elif block.keyword == "inference":
            inference[block.name] = _family(block, path)
        elif block.keyword == "inverse":
            if "given" not in block.entries:
                raise SpecParseError(f"'inverse {block.name}' needs a 'given' entry", block.line, 1, path)
            overrides[block.name] = _names(block.entries["given"])
        elif block.keyword == "oracle":
            oracle = _oracle(block, path)
        else:
            dataset = DatasetSpec(block.name, tuple((e.key, e.value) for e in block.entries.values()))

    graph = ModelGraph(variables, factors, inference, overrides, name)
    report = validate(graph)
    if not report.ok:
        error = report.errors[0]
        line, column = _anchor(error, blocks)
        raise SpecParseError(str(error), line, column, path)
    return ModelSpec(graph, oracle, dataset, path)


def load_spec(path: Union[str, Path]) -> ModelSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SpecParseError(f"cannot read spec: {exc.strerror}", 0, 0, str(path)) from None
    return parse_spec(text, str(path))


def _number(value: float) -> str:
    return repr(float(value))


def _format_family(spec: FamilySpec, lines: List[str]) -> None:
    default = FamilySpec()
    if spec.kind != default.kind:
        lines.append(f"  kind {spec.kind}")
    if spec.family:
        lines.append(f"  family {spec.family}")
    if spec.source != default.source:
        lines.append(f"  source {spec.source}")
    if spec.hidden:
        lines.append("  hidden " + ",".join(str(h) for h in spec.hidden))
    if spec.activation != default.activation:
        lines.append(f"  activation {spec.activation}")
    if spec.trainable != default.trainable:
        lines.append(f"  trainable {'true' if spec.trainable else 'false'}")
    if spec.init:
        items = (f"{key}={','.join(_number(v) for v in values)}" for key, values in spec.init)
        lines.append("  init " + " ".join(items))
    if spec.noise_dim != default.noise_dim:
        lines.append(f"  noise_dim {spec.noise_dim}")
    if spec.noise != default.noise:
        lines.append(f"  noise {spec.noise}")


def format_spec(spec: Union[ModelSpec, ModelGraph]) -> str:
    """Serialize back to spec text; parse_spec(format_spec(s)) gives an equal graph"""
    if isinstance(spec, ModelGraph):
        spec = ModelSpec(spec)
    graph = spec.graph
    lines = [f"model {graph.name}", ""]
    default = VariableDecl("_")
    for decl in graph.variable_decls:
        lines.append(f"variable {decl.name}")
        if decl.dim != default.dim:
            lines.append(f"  dim {decl.dim}")
        lines.append(f"  role {decl.role}")
        if decl.support != default.support:
            lines.append(f"  support {decl.support}")
        if decl.cardinality != default.cardinality:
            lines.append(f"  cardinality {decl.cardinality}")
        lines.append("")
    for factor in graph.factor_decls:
        lines.append(f"factor {factor.child}")
        if factor.parents:
            lines.append("  parents " + ",".join(factor.parents))
        _format_family(factor.spec, lines)
        lines.append("")
    for name, family in graph.inference.items():
        lines.append(f"inference {name}")
        _format_family(family, lines)
        lines.append("")
    for name, given in graph.inverse_overrides.items():
        lines.append(f"inverse {name}")
        lines.append("  given " + (",".join(given) or EMPTY_LIST))
        lines.append("")
    if spec.oracle is not None:
        lines.append(f"oracle {spec.oracle.kind}")
        lines.append("  grid " + ",".join(_number(v) for v in spec.oracle.grid))
        lines.append("")
    if spec.dataset is not None:
        lines.append(f"dataset {spec.dataset.name}")
        lines.extend(f"  {key} {value}" for key, value in spec.dataset.params)
        lines.append("")
    return "\n".join(lines)
