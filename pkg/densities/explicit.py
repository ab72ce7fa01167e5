"""
Explicit parametric conditionals: diagonal Gaussian, Bernoulli, Categorical

A family maps parent values to a distribution object through a parameter
source (affine map, MLP or lookup table over discrete parent configurations).
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import GENERATOR_ACTIVATION, GENERATOR_HIDDEN, LOG_FLOOR
from core.errors import ConfigurationError, DomainError, ShapeError
from core.nn import init_mlp, mlp_forward, mlp_layers, mlp_sizes
from core.tensor import Tensor, as_tensor, concat

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

FAMILIES = ("gaussian", "bernoulli", "categorical")
SOURCES = ("linear", "mlp", "table")

ParamMap = Mapping[str, Union[Tensor, np.ndarray]]


# ------------------------------------------------------------------
# DISTRIBUTIONS
# ------------------------------------------------------------------
class Normal:
    """Diagonal Gaussian; event axis is the last one"""

    def __init__(self, loc, scale=None, log_scale=None):
        self.loc = as_tensor(loc)
        if log_scale is not None:
            self.log_scale = as_tensor(log_scale)
            self.scale = self.log_scale.exp()
        elif scale is not None:
            self.scale = as_tensor(scale)
            self.log_scale = None
        else:
            raise ValueError("Normal needs scale or log_scale")

    def _log_scale(self) -> Tensor:
        if self.log_scale is None:
            if np.any(self.scale.values <= 0):
                raise DomainError("Normal.log_prob: scale must be strictly positive")
            self.log_scale = self.scale.log()
        return self.log_scale

    def log_prob(self, value) -> Tensor:
        value = as_tensor(value)
        z = (value - self.loc) / self.scale
        return (-HALF_LOG_2PI - self._log_scale() - 0.5 * z.square()).sum(axis=-1)

    def sample(self, rng: Optional[np.random.Generator] = None, noise: Optional[np.ndarray] = None) -> Tensor:
        """Reparametrized draw loc + scale * eps"""
        shape = np.broadcast_shapes(self.loc.shape, self.scale.shape)
        if noise is None:
            noise = rng.standard_normal(shape)
        return self.loc + self.scale * Tensor(noise)

    @property
    def mean(self) -> Tensor:
        return self.loc

    @property
    def variance(self) -> Tensor:
        return self.scale.square()


class Bernoulli:
    """Independent binary coordinates parameterized by logits"""

    def __init__(self, logits):
        self.logits = as_tensor(logits)

    @classmethod
    def from_probs(cls, probs) -> "Bernoulli":
        p = np.clip(np.asarray(probs, dtype=np.float64), LOG_FLOOR, 1.0 - 1e-16)
        return cls(np.log(p) - np.log1p(-p))

    @property
    def probs(self) -> Tensor:
        return self.logits.sigmoid()

    def log_prob(self, value) -> Tensor:
        value = as_tensor(value)
        if not np.all((value.values == 0.0) | (value.values == 1.0)):
            raise DomainError("Bernoulli.log_prob: value must be binary (0/1)")
        return (value * self.logits - self.logits.softplus()).sum(axis=-1)

    def sample(self, rng: np.random.Generator, noise: Optional[np.ndarray] = None) -> Tensor:
        """Inversion sampling; the sample carries no gradient"""
        p = self.probs.values
        u = rng.uniform(size=p.shape) if noise is None else noise
        return Tensor((u < p).astype(np.float64))


class Categorical:
    """One-hot categorical over the last axis"""

    def __init__(self, logits):
        self.logits = as_tensor(logits)

    @classmethod
    def from_probs(cls, probs) -> "Categorical":
        return cls(np.log(np.clip(np.asarray(probs, dtype=np.float64), LOG_FLOOR, 1.0)))

    @property
    def log_probs(self) -> Tensor:
        return self.logits - self.logits.logsumexp()

    @property
    def probs(self) -> Tensor:
        return self.log_probs.exp()

    def log_prob(self, value) -> Tensor:
        value = as_tensor(value)
        v = value.values
        if v.shape[-1] != self.logits.shape[-1]:
            raise ShapeError("Categorical.log_prob", v.shape, self.logits.shape)
        if not (np.all((v == 0.0) | (v == 1.0)) and np.all(v.sum(axis=-1) == 1.0)):
            raise DomainError("Categorical.log_prob: value must be one-hot")
        return (value * self.log_probs).sum(axis=-1)

    def sample(self, rng: np.random.Generator, noise: Optional[np.ndarray] = None) -> Tensor:
        """Inverse-CDF draw returned one-hot; no gradient path"""
        p = self.probs.values
        cdf = np.cumsum(p, axis=-1)
        u = rng.uniform(size=p.shape[:-1] + (1,)) if noise is None else noise
        index = np.minimum((u > cdf).sum(axis=-1), p.shape[-1] - 1)
        return Tensor(np.eye(p.shape[-1])[index])


Distribution = Union[Normal, Bernoulli, Categorical]


def normal_kl(q: Normal, p: Normal) -> Tensor:
    """KL(q || p) for diagonal Gaussians, summed over the event axis"""
    q_log_scale = q._log_scale()
    p_log_scale = p._log_scale()
    ratio = (q.variance + (q.loc - p.loc).square()) / p.variance
    return (p_log_scale - q_log_scale + 0.5 * ratio - 0.5).sum(axis=-1)


# ------------------------------------------------------------------
# PARENT LAYOUT
# ------------------------------------------------------------------
@dataclass(frozen=True)
class SlotLayout:
    """Width and support of one input slot (a variable's encoded value)"""

    name: str
    width: int
    support: str = "real"  # real | binary | categorical
    cardinality: int = 0   # categories for categorical slots

    @property
    def configurations(self) -> int:
        if self.support == "binary":
            return 2 ** self.width
        if self.support == "categorical":
            return self.cardinality
        raise ConfigurationError(f"slot '{self.name}' is continuous; table sources need discrete parents")


def configuration_index(parents: np.ndarray, slots: Sequence[SlotLayout]) -> np.ndarray:
    """Mixed-radix index of each row's joint discrete parent configuration"""
    index = np.zeros(parents.shape[0], dtype=np.int64)
    offset = 0
    for slot in slots:
        block = parents[:, offset:offset + slot.width]
        if slot.support == "binary":
            local = (block.astype(np.int64) * (2 ** np.arange(slot.width))).sum(axis=1)
        else:
            local = block.argmax(axis=1)
        index = index * slot.configurations + local
        offset += slot.width
    return index


# ------------------------------------------------------------------
# FAMILY
# ------------------------------------------------------------------
@dataclass(frozen=True)
class ExplicitFamily:
    """
    Parametric conditional p(x | parents)

    Args:
        family: gaussian | bernoulli | categorical
        dim: event width (for categorical, the number of categories)
        prefix: parameter name prefix
        parent_slots: layouts of the conditioning values, in order
        source: linear | mlp | table
        hidden, activation: MLP shape for the mlp source
        trainable: whether the parameters are optimized
        init: explicit initial values (weight, bias, log_scale, probs)
    """

    family: str
    dim: int
    prefix: str
    parent_slots: Tuple[SlotLayout, ...] = ()
    source: str = "linear"
    hidden: Tuple[int, ...] = GENERATOR_HIDDEN
    activation: str = GENERATOR_ACTIVATION
    trainable: bool = True
    init: Mapping[str, Tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family '{self.family}' (choose from {FAMILIES})")
        if self.source not in SOURCES:
            raise ConfigurationError(f"unknown parameter source '{self.source}' (choose from {SOURCES})")
        if self.source == "table":
            for slot in self.parent_slots:
                slot.configurations  # raises for continuous parents

    # --- layout ---
    @property
    def parent_dim(self) -> int:
        return sum(slot.width for slot in self.parent_slots)

    @property
    def head_width(self) -> int:
        """Width of the natural-parameter vector emitted per row"""
        return 2 * self.dim if self.family == "gaussian" else self.dim

    @property
    def configurations(self) -> int:
        count = 1
        for slot in self.parent_slots:
            count *= slot.configurations
        return count

    # --- parameters ---
    def init_params(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        if self.source == "mlp":
            sizes = mlp_sizes(self.parent_dim, self.hidden, self.head_width)
            return init_mlp(sizes, rng, f"{self.prefix}.net")
        if self.source == "table":
            return {f"{self.prefix}.table": self._initial_table(rng)}
        return self._initial_linear(rng)

    def _initial_linear(self, rng: np.random.Generator) -> Dict[str, np.ndarray]:
        params: Dict[str, np.ndarray] = {}
        if self.parent_dim:
            if "weight" in self.init:
                weight = np.asarray(self.init["weight"], dtype=np.float64).reshape(self.parent_dim, self.dim)
            else:
                bound = 1.0 / np.sqrt(self.parent_dim)
                weight = rng.uniform(-bound, bound, size=(self.parent_dim, self.dim))
            params[f"{self.prefix}.W"] = weight
        params[f"{self.prefix}.b"] = self._initial_location()
        if self.family == "gaussian":
            params[f"{self.prefix}.log_scale"] = self._vector("log_scale", 0.0)
        return params

    def _initial_location(self) -> np.ndarray:
        if "probs" in self.init:
            probs = np.asarray(self.init["probs"], dtype=np.float64)
            if self.family == "bernoulli":
                return Bernoulli.from_probs(probs).logits.values.reshape(self.dim)
            return Categorical.from_probs(probs).logits.values.reshape(self.dim)
        return self._vector("bias", 0.0)

    def _vector(self, key: str, default: float) -> np.ndarray:
        if key not in self.init:
            return np.full(self.dim, default)
        values = np.asarray(self.init[key], dtype=np.float64).reshape(-1)
        return np.broadcast_to(values, (self.dim,)).copy()

    def _initial_table(self, rng: np.random.Generator) -> np.ndarray:
        rows = self.configurations
        if "probs" in self.init:
            probs = np.asarray(self.init["probs"], dtype=np.float64).reshape(rows, -1)
            if self.family == "bernoulli":
                return Bernoulli.from_probs(probs).logits.values
            return Categorical.from_probs(probs).logits.values
        if self.family == "gaussian":
            table = np.zeros((rows, 2 * self.dim))
            table[:, :self.dim] = rng.normal(size=(rows, self.dim))
            return table
        return rng.normal(size=(rows, self.head_width))

    def param_names(self, params: Mapping[str, object]) -> List[str]:
        return [name for name in params if name.startswith(self.prefix + ".")]

    # --- evaluation ---
    def natural_params(self, params: ParamMap, parents: Optional[Tensor], batch: int) -> Tensor:
        """Rows of natural parameters, shape (batch, head_width)"""
        if self.parent_dim and (parents is None or parents.shape[-1] != self.parent_dim):
            got = None if parents is None else parents.shape
            raise ShapeError(f"{self.prefix}.natural_params", (batch, self.parent_dim), got or ())

        if self.source == "mlp":
            layers = mlp_layers(params, f"{self.prefix}.net")
            inputs = parents if self.parent_dim else Tensor(np.zeros((batch, 0)))
            return mlp_forward(layers, self.activation, inputs)

        if self.source == "table":
            table = as_tensor(params[f"{self.prefix}.table"])
            if self.parent_dim:
                index = configuration_index(parents.values, self.parent_slots)
            else:
                index = np.zeros(batch, dtype=np.int64)
            return Tensor(np.eye(self.configurations)[index]) @ table

        bias = as_tensor(params[f"{self.prefix}.b"])
        if self.parent_dim:
            head = parents @ as_tensor(params[f"{self.prefix}.W"]) + bias
        else:
            head = Tensor(np.zeros((batch, self.dim))) + bias
        if self.family == "gaussian":
            log_scale = Tensor(np.zeros((batch, self.dim))) + as_tensor(params[f"{self.prefix}.log_scale"])
            return concat([head, log_scale])
        return head

    def distribution(self, params: ParamMap, parents: Optional[Tensor], batch: int) -> Distribution:
        head = self.natural_params(params, parents, batch)
        if self.family == "gaussian":
            return Normal(head.slice(0, self.dim), log_scale=head.slice(self.dim, 2 * self.dim))
        if self.family == "bernoulli":
            return Bernoulli(head)
        return Categorical(head)


# ------------------------------------------------------------------
# OPERATIONS
# ------------------------------------------------------------------
def _batch_of(value: Optional[Tensor], parents: Optional[Tensor]) -> int:
    for t in (value, parents):
        if t is not None and t.ndim >= 1:
            return t.shape[0]
    return 1


def log_prob(family: ExplicitFamily, value, parents=None, params: Optional[ParamMap] = None) -> Tensor:
    """
    Exact log-density / log-mass of ``value`` given parent values

    Raises:
        DomainError: value outside the family's support
    """
    value = as_tensor(value)
    if value.ndim == 1:
        value = value.reshape(1, value.shape[0])
    parents = None if parents is None else as_tensor(parents)
    return family.distribution(params or {}, parents, _batch_of(value, parents)).log_prob(value)


def sample_explicit(
    family: ExplicitFamily,
    parents=None,
    params: Optional[ParamMap] = None,
    rng: Optional[np.random.Generator] = None,
    batch: Optional[int] = None,
    noise: Optional[np.ndarray] = None,
) -> Tensor:
    """
    Draw one value per row: reparametrized for Gaussians, inversion otherwise
    """
    parents = None if parents is None else as_tensor(parents)
    rows = batch if batch is not None else _batch_of(None, parents)
    return family.distribution(params or {}, parents, rows).sample(rng, noise)
