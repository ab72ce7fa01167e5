"""
Primitive operations: forward evaluation, input checks and vector-Jacobian products
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

from core.errors import DomainError, ShapeError

Values = List[np.ndarray]


def _no_check(values: Values, attrs: Dict[str, Any]) -> None:
    return None


@dataclass(frozen=True)
class Primitive:
    name: str
    forward: Callable[[Values, Dict[str, Any]], Tuple[np.ndarray, Any]]
    vjp: Callable[[np.ndarray, Any, Dict[str, Any]], Sequence[Any]]
    check: Callable[[Values, Dict[str, Any]], None] = _no_check


# ------------------------------------------------------------------
# CHECKS
# ------------------------------------------------------------------
def _check_broadcast(name: str):
    def check(values: Values, attrs: Dict[str, Any]) -> None:
        try:
            np.broadcast_shapes(values[0].shape, values[1].shape)
        except ValueError:
            raise ShapeError(name, values[0].shape, values[1].shape) from None
    return check


def _check_matmul(values: Values, attrs: Dict[str, Any]) -> None:
    a, b = values
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape, detail="expects (n, k) @ (k, m)")


def _check_log(values: Values, attrs: Dict[str, Any]) -> None:
    if np.any(values[0] <= 0):
        worst = float(np.min(values[0]))
        raise DomainError(f"log: nonpositive input (min {worst:g})")


def _check_divide(values: Values, attrs: Dict[str, Any]) -> None:
    _check_broadcast("divide")(values, attrs)
    if np.any(values[1] == 0):
        raise DomainError("divide: zero denominator")


def _check_concat(values: Values, attrs: Dict[str, Any]) -> None:
    if not values:
        raise ShapeError("concat", detail="nothing to concatenate")
    lead = values[0].shape[:-1]
    for v in values[1:]:
        if v.ndim != values[0].ndim or v.shape[:-1] != lead:
            raise ShapeError("concat", values[0].shape, v.shape, detail="leading axes differ")


def _check_slice(values: Values, attrs: Dict[str, Any]) -> None:
    width = values[0].shape[-1] if values[0].ndim else 0
    if not 0 <= attrs["start"] <= attrs["stop"] <= width:
        raise ShapeError("slice", values[0].shape, detail=f"columns [{attrs['start']}, {attrs['stop']})")


def _check_reshape(values: Values, attrs: Dict[str, Any]) -> None:
    if int(np.prod(attrs["shape"])) != values[0].size:
        raise ShapeError("reshape", values[0].shape, attrs["shape"])


def _check_nonscalar(name: str):
    def check(values: Values, attrs: Dict[str, Any]) -> None:
        if values[0].ndim == 0:
            raise ShapeError(name, values[0].shape, detail="needs at least one axis")
    return check


# ------------------------------------------------------------------
# REDUCTION HELPERS
# ------------------------------------------------------------------
def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape).copy()


def _reduced_count(shape: Tuple[int, ...], axis) -> int:
    if axis is None:
        return int(np.prod(shape)) if shape else 1
    return shape[axis]


# ------------------------------------------------------------------
# PRIMITIVES
# ------------------------------------------------------------------
def _concat_forward(values: Values, attrs):
    widths = [v.shape[-1] for v in values]
    return np.concatenate(values, axis=-1), widths


def _concat_vjp(g, widths, attrs):
    cuts = np.cumsum(widths)[:-1]
    return np.split(g, cuts, axis=-1)


def _check_concat_rows(values: Values, attrs: Dict[str, Any]) -> None:
    if not values:
        raise ShapeError("concat_rows", detail="nothing to concatenate")
    for v in values[1:]:
        if v.ndim != values[0].ndim or v.shape[1:] != values[0].shape[1:]:
            raise ShapeError("concat_rows", values[0].shape, v.shape, detail="trailing axes differ")


def _concat_rows_forward(values: Values, attrs):
    return np.concatenate(values, axis=0), [v.shape[0] for v in values]


def _concat_rows_vjp(g, heights, attrs):
    return np.split(g, np.cumsum(heights)[:-1], axis=0)


def _slice_forward(values: Values, attrs):
    x = values[0]
    return x[..., attrs["start"]:attrs["stop"]], x.shape


def _slice_vjp(g, shape, attrs):
    full = np.zeros(shape)
    full[..., attrs["start"]:attrs["stop"]] = g
    return (full,)


def _logsumexp_forward(values: Values, attrs):
    x = values[0]
    out = logsumexp(x, axis=-1, keepdims=True)
    return out, np.exp(x - out)


PRIMITIVES: Dict[str, Primitive] = {
    "add": Primitive(
        "add",
        lambda v, a: (v[0] + v[1], None),
        lambda g, s, a: (g, g),
        _check_broadcast("add"),
    ),
    "sub": Primitive(
        "sub",
        lambda v, a: (v[0] - v[1], None),
        lambda g, s, a: (g, -g),
        _check_broadcast("sub"),
    ),
    "mul": Primitive(
        "mul",
        lambda v, a: (v[0] * v[1], (v[0], v[1])),
        lambda g, s, a: (g * s[1], g * s[0]),
        _check_broadcast("mul"),
    ),
    "divide": Primitive(
        "divide",
        lambda v, a: (v[0] / v[1], (v[0], v[1])),
        lambda g, s, a: (g / s[1], -g * s[0] / (s[1] * s[1])),
        _check_divide,
    ),
    "negate": Primitive(
        "negate",
        lambda v, a: (-v[0], None),
        lambda g, s, a: (-g,),
    ),
    "matmul": Primitive(
        "matmul",
        lambda v, a: (v[0] @ v[1], (v[0], v[1])),
        lambda g, s, a: (g @ s[1].T, s[0].T @ g),
        _check_matmul,
    ),
    "exp": Primitive(
        "exp",
        lambda v, a: (lambda out: (out, out))(np.exp(v[0])),
        lambda g, out, a: (g * out,),
    ),
    "log": Primitive(
        "log",
        lambda v, a: (np.log(v[0]), v[0]),
        lambda g, x, a: (g / x,),
        _check_log,
    ),
    "tanh": Primitive(
        "tanh",
        lambda v, a: (lambda out: (out, out))(np.tanh(v[0])),
        lambda g, out, a: (g * (1.0 - out * out),),
    ),
    "relu": Primitive(
        "relu",
        lambda v, a: (np.maximum(v[0], 0.0), v[0] > 0),
        lambda g, mask, a: (g * mask,),
    ),
    "sigmoid": Primitive(
        "sigmoid",
        lambda v, a: (lambda out: (out, out))(expit(v[0])),
        lambda g, out, a: (g * out * (1.0 - out),),
    ),
    "softplus": Primitive(
        "softplus",
        lambda v, a: (np.logaddexp(0.0, v[0]), v[0]),
        lambda g, x, a: (g * expit(x),),
    ),
    "square": Primitive(
        "square",
        lambda v, a: (v[0] * v[0], v[0]),
        lambda g, x, a: (2.0 * g * x,),
    ),
    "clamp": Primitive(
        "clamp",
        lambda v, a: (np.clip(v[0], a["low"], a["high"]), (v[0] >= a["low"]) & (v[0] <= a["high"])),
        lambda g, inside, a: (g * inside,),
    ),
    "sum": Primitive(
        "sum",
        lambda v, a: (np.sum(v[0], axis=a.get("axis"), keepdims=a.get("keepdims", False)), v[0].shape),
        lambda g, shape, a: (_expand_reduced(g, shape, a.get("axis"), a.get("keepdims", False)),),
    ),
    "mean": Primitive(
        "mean",
        lambda v, a: (np.mean(v[0], axis=a.get("axis"), keepdims=a.get("keepdims", False)), v[0].shape),
        lambda g, shape, a: (
            _expand_reduced(g, shape, a.get("axis"), a.get("keepdims", False)) / _reduced_count(shape, a.get("axis")),
        ),
    ),
    "logsumexp": Primitive(
        "logsumexp",
        _logsumexp_forward,
        lambda g, softmax, a: (g * softmax,),
        _check_nonscalar("logsumexp"),
    ),
    "concat": Primitive("concat", _concat_forward, _concat_vjp, _check_concat),
    "concat_rows": Primitive("concat_rows", _concat_rows_forward, _concat_rows_vjp, _check_concat_rows),
    "slice": Primitive("slice", _slice_forward, _slice_vjp, _check_slice),
    "reshape": Primitive(
        "reshape",
        lambda v, a: (v[0].reshape(a["shape"]), v[0].shape),
        lambda g, shape, a: (g.reshape(shape),),
        _check_reshape,
    ),
    "transpose": Primitive(
        "transpose",
        lambda v, a: (v[0].T, None),
        lambda g, s, a: (g.T,),
    ),
}
