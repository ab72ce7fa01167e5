"""
Partial observability: per-datum masks and per-pattern inverse factorizations
"""

import threading
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Tuple

import numpy as np

from core.errors import MaskError
from graph.inverse import InverseFactorization, derive_inverse_factorization
from graph.model_graph import ModelGraph
from trainer.state import ObservationMask, parse_mask_policy
from utils.logging_utils import get_logger

logger = get_logger(__name__)


class InverseCache:
    """
    Inverse factorizations keyed by observed set, derived lazily

    The full pattern maps to the base inverse (overrides included); other
    patterns are derived without overrides.
    """

    def __init__(self, graph: ModelGraph, base: InverseFactorization):
        self.graph = graph
        self.base = base
        self._entries: Dict[FrozenSet[str], InverseFactorization] = {frozenset(base.observed): base}
        self._lock = threading.Lock()

    def get(self, observed: Sequence[str]) -> InverseFactorization:
        key = frozenset(observed)
        with self._lock:
            cached = self._entries.get(key)
        if cached is not None:
            return cached
        derived = derive_inverse_factorization(self.graph, observed=sorted(key), overrides={})
        with self._lock:
            self._entries.setdefault(key, derived)
            logger.debug("[mask] derived inverse for observed=%s: %s", sorted(key), derived.describe())
            return self._entries[key]

    def __len__(self) -> int:
        return len(self._entries)


def apply_mask(
    cache: InverseCache,
    variables: Sequence[str],
    pattern: Sequence[bool],
    allow_unobserved: bool = False,
) -> InverseFactorization:
    """
    Effective inverse factorization for one mask pattern

    Args:
        cache: per-pattern cache
        variables: observed-role variables, in pattern order
        pattern: presence flag per variable
        allow_unobserved: return the evidence-free inverse instead of raising

    Raises:
        MaskError: every variable masked and ``allow_unobserved`` is False
    """
    if len(pattern) != len(variables):
        raise MaskError(f"mask pattern has {len(pattern)} flags for {len(variables)} observed variables")
    observed = [v for v, keep in zip(variables, pattern) if keep]
    if not observed and not allow_unobserved:
        raise MaskError("datum has no observed variable; it carries no evidence for the bottom-up chain")
    return cache.get(observed)


def mask_for_batch(
    policy: str,
    variables: Sequence[str],
    batch: Mapping[str, np.ndarray],
    rng: np.random.Generator,
) -> Tuple[ObservationMask, Dict[str, np.ndarray]]:
    """
    Build the minibatch mask and the cleaned observation arrays

    full: everything present. missing: variables with any NaN cell in a row
    are masked for that row. drop:<p>: each variable masked with probability
    p, at least one kept per row.

    Returns:
        (mask, observations with masked cells zero-filled)
    """
    kind, p = parse_mask_policy(policy)
    variables = tuple(variables)
    rows = len(next(iter(batch.values()))) if batch else 0
    cleaned = {v: np.asarray(batch[v], dtype=np.float64).reshape(rows, -1).copy() for v in variables}

    if kind == "full":
        for v in variables:
            if np.isnan(cleaned[v]).any():
                raise MaskError(f"observed variable '{v}' has missing values; use --mask-policy missing")
        return ObservationMask.full(variables, rows), cleaned

    if kind == "missing":
        present = np.stack([~np.isnan(cleaned[v]).any(axis=1) for v in variables], axis=1)
        allow_empty = True
    else:
        present = rng.uniform(size=(rows, len(variables))) >= p
        empty = np.flatnonzero(~present.any(axis=1))
        if empty.size:
            present[empty, rng.integers(0, len(variables), size=empty.size)] = True
        allow_empty = False

    for j, v in enumerate(variables):
        cleaned[v][~present[:, j]] = 0.0
        cleaned[v] = np.nan_to_num(cleaned[v], nan=0.0)
    return ObservationMask(variables, present, allow_empty=allow_empty), cleaned
