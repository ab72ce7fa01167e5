"""
Training configuration, mutable training state and observation masks
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from config.settings import (
    DEFAULT_ITERATIONS,
    DEFAULT_LR_PHI,
    DEFAULT_LR_THETA,
    DEFAULT_LR_XI,
    DEFAULT_MINIBATCH,
    DEFAULT_ND,
    DEFAULT_OPTIMIZER,
    DEFAULT_PARTICLES_K,
    DEFAULT_PARTICLES_L,
    DEFAULT_SEED,
    MASK_POLICIES,
    METRICS_EVERY,
)
from core.errors import ConfigurationError, MaskError
from core.optim import OptimizerState
from objectives.variants import ObjectiveVariant
from utils.rng import make_rng

Params = Dict[str, np.ndarray]


def parse_mask_policy(text: str) -> Tuple[str, float]:
    """'full' | 'missing' | 'drop:<p>' -> (kind, p)"""
    kind, _, arg = text.partition(":")
    if kind not in MASK_POLICIES:
        raise ConfigurationError(f"unknown mask policy '{text}' (choose from full, missing, drop:<p>)")
    if kind != "drop":
        if arg:
            raise ConfigurationError(f"mask policy '{kind}' takes no argument")
        return kind, 0.0
    try:
        p = float(arg)
    except ValueError:
        raise ConfigurationError(f"mask policy '{text}': drop probability must be a number") from None
    if not 0.0 <= p < 1.0:
        raise ConfigurationError(f"mask policy '{text}': drop probability must lie in [0, 1)")
    return kind, p


@dataclass
class TrainConfig:
    variant: ObjectiveVariant = ObjectiveVariant.ADMP_JSD_LOC
    iterations: int = DEFAULT_ITERATIONS
    minibatch: int = DEFAULT_MINIBATCH
    particles_l: int = DEFAULT_PARTICLES_L
    particles_k: int = DEFAULT_PARTICLES_K
    lr_theta: float = DEFAULT_LR_THETA
    lr_phi: float = DEFAULT_LR_PHI
    lr_xi: float = DEFAULT_LR_XI
    n_d: int = DEFAULT_ND
    seed: int = DEFAULT_SEED
    optimizer: str = DEFAULT_OPTIMIZER
    mask_policy: str = "full"
    non_saturating: bool = False
    score_function: bool = True
    metrics_every: int = METRICS_EVERY

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = ObjectiveVariant.parse(self.variant)
        for name in ("particles_l", "particles_k", "n_d", "minibatch", "metrics_every"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer '{self.optimizer}' (choose from adam, sgd)")
        parse_mask_policy(self.mask_policy)

    @property
    def masked(self) -> bool:
        return parse_mask_policy(self.mask_policy)[0] != "full"

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["variant"] = self.variant.value
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})

    def config_hash(self, exclude_seed: bool = True) -> str:
        """Stable hash of the configuration (seed excluded by default)"""
        data = self.to_dict()
        if exclude_seed:
            data.pop("seed")
        return hashlib.sha256(json.dumps(data, sort_keys=True).encode("utf-8")).hexdigest()[:16]


@dataclass
class TrainState:
    """
    theta (generative), phi (inference) and xi (adversary) parameters with
    one optimizer state per update group, the step counter and the RNG
    """

    theta: Params
    phi: Params
    xi: Params
    optimizers: Dict[str, OptimizerState] = field(default_factory=dict)
    step: int = 0
    rng: np.random.Generator = field(default_factory=lambda: make_rng(DEFAULT_SEED))

    def copy(self) -> "TrainState":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return TrainState(
            theta={k: v.copy() for k, v in self.theta.items()},
            phi={k: v.copy() for k, v in self.phi.items()},
            xi={k: v.copy() for k, v in self.xi.items()},
            optimizers={k: s.copy() for k, s in self.optimizers.items()},
            step=self.step,
            rng=rng,
        )

    def group(self, name: str) -> Params:
        return {"theta": self.theta, "phi": self.phi, "xi": self.xi}[name]

    def param_hash(self, group: str) -> str:
        """Digest of one parameter group, for before/after comparisons"""
        digest = hashlib.sha256()
        params = self.group(group)
        for key in sorted(params):
            digest.update(key.encode("utf-8"))
            digest.update(np.ascontiguousarray(params[key], dtype="<f8").tobytes())
        return digest.hexdigest()


@dataclass(frozen=True)
class ObservationMask:
    """
    Per-datum presence of the observed-role variables

    Args:
        variables: observed-role variables, column order of ``present``
        present: (batch, len(variables)) booleans
        allow_empty: accept evidence-free rows (they contribute top-down terms only)
    """

    variables: Tuple[str, ...]
    present: np.ndarray
    allow_empty: bool = False

    def __post_init__(self):
        present = np.asarray(self.present, dtype=bool)
        if present.ndim != 2 or present.shape[1] != len(self.variables):
            raise MaskError(f"mask shape {present.shape} does not match {len(self.variables)} observed variables")
        if not self.allow_empty and present.shape[0] and not present.any(axis=1).all():
            rows = np.flatnonzero(~present.any(axis=1)).tolist()
            raise MaskError(f"every datum needs at least one observed variable; rows {rows[:10]} have none")
        object.__setattr__(self, "present", present)

    @classmethod
    def full(cls, variables: Sequence[str], batch: int) -> "ObservationMask":
        return cls(tuple(variables), np.ones((batch, len(variables)), dtype=bool))

    @property
    def batch(self) -> int:
        return self.present.shape[0]

    def observed_in(self, row: int) -> Tuple[str, ...]:
        return tuple(v for v, keep in zip(self.variables, self.present[row]) if keep)

    def patterns(self) -> Dict[Tuple[bool, ...], np.ndarray]:
        """pattern -> row indices, patterns in first-appearance order"""
        groups: Dict[Tuple[bool, ...], list] = {}
        for row, pattern in enumerate(map(tuple, self.present.tolist())):
            groups.setdefault(pattern, []).append(row)
        return {k: np.asarray(v, dtype=np.int64) for k, v in groups.items()}
