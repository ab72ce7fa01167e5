"""
Random number generator helpers
"""

import json
from typing import Any, Dict

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 generator"""
    return np.random.Generator(np.random.PCG64(seed))


def rng_state(rng: np.random.Generator) -> Dict[str, Any]:
    """Snapshot of the bit generator state (JSON-serializable)"""
    return rng.bit_generator.state


def restore_rng(state: Dict[str, Any]) -> np.random.Generator:
    """Rebuild a generator from a state snapshot"""
    bit_generator = getattr(np.random, state["bit_generator"])()
    bit_generator.state = state
    return np.random.Generator(bit_generator)


def encode_rng_state(rng: np.random.Generator) -> bytes:
    return json.dumps(rng_state(rng), sort_keys=True).encode("utf-8")


def decode_rng_state(blob: bytes) -> np.random.Generator:
    return restore_rng(json.loads(blob.decode("utf-8")))


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    """Generator keyed on (seed, *keys); leaves the training stream untouched"""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *keys])))
