"""
Reverse-mode automatic differentiation over dense float64 tensors

A ComputationRecord is the tape: while one is active (``with record:``) every
primitive applied to a tensor that already lives on the record is appended to
it, and ``backward`` walks the tape once in reverse.
"""

import threading
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from core.errors import GradientError, NonFiniteError, ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence[float]]

_ACTIVE = threading.local()


def active_record() -> Optional["ComputationRecord"]:
    """Innermost active record on this thread, if any"""
    stack = getattr(_ACTIVE, "stack", None)
    return stack[-1] if stack else None


@dataclass
class RecordedOp:
    kind: str
    inputs: Tuple[Optional[int], ...]
    input_shapes: Tuple[Tuple[int, ...], ...]
    output: int
    saved: Any
    attrs: Dict[str, Any] = field(default_factory=dict)


class ComputationRecord:
    """Ordered tape of recorded primitive operations"""

    def __init__(self):
        self.operations: List[RecordedOp] = []
        self.leaves: Dict[int, Tuple[str, Tuple[int, ...]]] = {}
        self._next_id = 0

    def __enter__(self) -> "ComputationRecord":
        stack = getattr(_ACTIVE, "stack", None)
        if stack is None:
            stack = _ACTIVE.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.stack.pop()

    def new_node(self) -> int:
        node = self._next_id
        self._next_id += 1
        return node

    def leaf(self, values: ArrayLike, name: Optional[str] = None) -> "Tensor":
        """Register a differentiable input"""
        data = values.values if isinstance(values, Tensor) else values
        node = self.new_node()
        tensor = Tensor(data, node_id=node, record=self, name=name)
        self.leaves[node] = (name or f"leaf{node}", tensor.shape)
        return tensor

    def bind(self, params: Mapping[str, np.ndarray], names: Optional[Sequence[str]] = None) -> Dict[str, "Tensor"]:
        """
        Turn named parameter arrays into leaf tensors

        Args:
            params: name -> array
            names: subset to make differentiable; the rest become constants

        Returns:
            name -> Tensor
        """
        wanted = set(params) if names is None else set(names)
        return {
            name: self.leaf(value, name) if name in wanted else Tensor(value, name=name)
            for name, value in params.items()
        }

    def gradients_by_name(self, grads: Mapping[int, np.ndarray]) -> Dict[str, np.ndarray]:
        return {self.leaves[node][0]: g for node, g in grads.items() if node in self.leaves}

    def __len__(self) -> int:
        return len(self.operations)


class Tensor:
    """Dense real array, optionally tracked by a ComputationRecord"""

    __array_priority__ = 100  # numpy defers to our reflected operators

    def __init__(
        self,
        values: ArrayLike,
        node_id: Optional[int] = None,
        record: Optional[ComputationRecord] = None,
        name: Optional[str] = None,
    ):
        if isinstance(values, Tensor):
            values = values.values
        self.values = np.array(values, dtype=np.float64)
        self.node_id = node_id
        self.record = record
        self.name = name

    # --- convenience ---
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def tracked(self) -> bool:
        return self.node_id is not None

    def item(self) -> float:
        if self.values.size != 1:
            raise ShapeError("item", self.shape, detail="expected a single element")
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.values.copy()

    def detach(self) -> "Tensor":
        """Constant copy, safe to hand to another thread"""
        return Tensor(self.values.copy(), name=self.name)

    def __repr__(self) -> str:
        tag = f", node={self.node_id}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __len__(self) -> int:
        return self.shape[0]

    # --- arithmetic ---
    def __add__(self, other):
        return primitive_forward("add", (self, other))

    def __radd__(self, other):
        return primitive_forward("add", (other, self))

    def __sub__(self, other):
        return primitive_forward("sub", (self, other))

    def __rsub__(self, other):
        return primitive_forward("sub", (other, self))

    def __mul__(self, other):
        return primitive_forward("mul", (self, other))

    def __rmul__(self, other):
        return primitive_forward("mul", (other, self))

    def __truediv__(self, other):
        return primitive_forward("divide", (self, other))

    def __rtruediv__(self, other):
        return primitive_forward("divide", (other, self))

    def __neg__(self):
        return primitive_forward("negate", (self,))

    def __matmul__(self, other):
        return primitive_forward("matmul", (self, other))

    def __rmatmul__(self, other):
        return primitive_forward("matmul", (other, self))

    # --- elementwise ---
    def exp(self):
        return primitive_forward("exp", (self,))

    def log(self):
        return primitive_forward("log", (self,))

    def tanh(self):
        return primitive_forward("tanh", (self,))

    def relu(self):
        return primitive_forward("relu", (self,))

    def sigmoid(self):
        return primitive_forward("sigmoid", (self,))

    def softplus(self):
        return primitive_forward("softplus", (self,))

    def square(self):
        return primitive_forward("square", (self,))

    def clamp(self, low: float, high: float):
        return primitive_forward("clamp", (self,), low=low, high=high)

    # --- reductions & shape ---
    def sum(self, axis: Optional[int] = None, keepdims: bool = False):
        return primitive_forward("sum", (self,), axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False):
        return primitive_forward("mean", (self,), axis=axis, keepdims=keepdims)

    def logsumexp(self):
        """Log-sum-exp over the last axis, keeping it"""
        return primitive_forward("logsumexp", (self,))

    def slice(self, start: int, stop: int):
        """Columns [start, stop) of the last axis"""
        return primitive_forward("slice", (self,), start=start, stop=stop)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return primitive_forward("reshape", (self,), shape=tuple(shape))

    @property
    def T(self):
        return primitive_forward("transpose", (self,))


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[ArrayLike]) -> Tensor:
    """Concatenate along the last axis"""
    return primitive_forward("concat", tuple(tensors))


def concat_rows(tensors: Sequence[ArrayLike]) -> Tensor:
    """Stack along the first (batch) axis"""
    return primitive_forward("concat_rows", tuple(tensors))


def primitive_forward(op_kind: str, inputs: Sequence[ArrayLike], **attrs) -> Tensor:
    """
    Evaluate one primitive and record it on the active record

    Args:
        op_kind: name registered in core.ops.PRIMITIVES
        inputs: tensors (or array-likes, treated as constants)
        **attrs: op attributes (axis, bounds, ...)

    Returns:
        Result tensor, tracked when any input is tracked on the active record

    Raises:
        ShapeError: incompatible input shapes
        DomainError: e.g. log of a nonpositive value
        NonFiniteError: NaN/Inf in the result
    """
    from core.ops import PRIMITIVES

    try:
        primitive = PRIMITIVES[op_kind]
    except KeyError:
        raise ValueError(f"unknown primitive '{op_kind}'") from None

    tensors = [as_tensor(t) for t in inputs]
    values = [t.values for t in tensors]
    primitive.check(values, attrs)
    with np.errstate(all="ignore"):
        out, saved = primitive.forward(values, attrs)
    out = np.asarray(out, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        inputs_finite = all(np.all(np.isfinite(v)) for v in values)
        raise NonFiniteError(op_kind, "from finite inputs" if inputs_finite else "inputs already non-finite")

    record = active_record()
    if record is None or not any(t.node_id is not None and t.record is record for t in tensors):
        return Tensor(out)

    node = record.new_node()
    record.operations.append(
        RecordedOp(
            kind=op_kind,
            inputs=tuple(t.node_id if t.record is record else None for t in tensors),
            input_shapes=tuple(v.shape for v in values),
            output=node,
            saved=saved,
            attrs=attrs,
        )
    )
    return Tensor(out, node_id=node, record=record)


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``"""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def backward(record: ComputationRecord, output: Tensor) -> Dict[int, np.ndarray]:
    """
    Gradients of a scalar output with respect to every leaf of the record

    Args:
        record: the tape the output was computed on
        output: single-valued tensor

    Returns:
        leaf node id -> gradient array (same shape as the leaf; zeros when unused)

    Raises:
        GradientError: output is not a scalar
    """
    from core.ops import PRIMITIVES

    if output.size != 1:
        raise GradientError(
            f"backward() needs a scalar output, got shape {output.shape}; "
            "reduce it first with .sum() or .mean()"
        )

    grads: Dict[int, np.ndarray] = {}
    if output.node_id is not None and output.record is record:
        grads[output.node_id] = np.ones_like(output.values)

    for op in reversed(record.operations):
        upstream = grads.get(op.output)
        if upstream is None:
            continue
        if op.output not in record.leaves:
            del grads[op.output]
        input_grads = PRIMITIVES[op.kind].vjp(upstream, op.saved, op.attrs)
        for node, grad, shape in zip(op.inputs, input_grads, op.input_shapes):
            if node is None or grad is None:
                continue
            grad = unbroadcast(np.asarray(grad, dtype=np.float64), shape)
            grads[node] = grads[node] + grad if node in grads else grad

    return {
        node: grads.get(node, np.zeros(shape))
        for node, (_, shape) in record.leaves.items()
    }
