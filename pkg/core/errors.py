"""
Exception hierarchy for the engine
"""

from typing import Optional, Sequence, Tuple


class AdmpError(Exception):
    """Base class for every engine error"""


class ShapeError(AdmpError, ValueError):
    """Incompatible tensor shapes for an operation"""

    def __init__(self, op: str, *shapes: Tuple[int, ...], detail: str = ""):
        self.op = op
        self.shapes = shapes
        shown = " vs ".join(str(tuple(s)) for s in shapes)
        message = f"{op}: incompatible shapes {shown}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class DomainError(AdmpError, ValueError):
    """Value outside the domain of an operation or the support of a family"""


class NonFiniteError(AdmpError, ArithmeticError):
    """A forward operation produced NaN/Inf from finite inputs"""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        message = f"non-finite value produced by '{op}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class GradientError(AdmpError):
    """backward() called on something it cannot differentiate"""


class GraphError(AdmpError, ValueError):
    """Malformed model graph"""


class CycleError(GraphError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle = list(cycle)
        super().__init__("cycle detected: " + " -> ".join(self.cycle))


class CompletenessError(GraphError):
    def __init__(self, variable: str, detail: str = "no factor declared"):
        self.variable = variable
        super().__init__(f"variable '{variable}': {detail}")


class UnknownVariableError(GraphError, KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown variable '{name}'")

    def __str__(self) -> str:
        return self.args[0]


class SamplingError(AdmpError, ValueError):
    """Sampling request the model cannot serve (e.g. missing evidence)"""


class MaskError(AdmpError, ValueError):
    """Invalid observation mask"""


class ConfigurationError(AdmpError, ValueError):
    """Variant, graph and configuration do not fit together"""


class TrainingAborted(AdmpError):
    """Training stopped on a non-finite loss"""

    def __init__(self, step: int, factor: str, op: Optional[str] = None):
        self.step = step
        self.factor = factor
        self.op = op
        where = f" in op '{op}'" if op else ""
        super().__init__(f"non-finite loss at step {step}, factor '{factor}'{where}")


class CheckpointError(AdmpError):
    """Base class for checkpoint problems"""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointCorruptError(CheckpointError):
    pass


class SpecParseError(AdmpError, ValueError):
    """Model-spec text that does not parse; anchored at line/column"""

    def __init__(self, message: str, line: int = 0, column: int = 0, path: str = "<spec>"):
        self.line = line
        self.column = column
        self.path = path
        super().__init__(f"{path}:{line}:{column}: {message}")


class OracleError(AdmpError, ValueError):
    """Ground-truth computation not possible for this input"""
