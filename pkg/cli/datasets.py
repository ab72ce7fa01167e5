"""
Toy datasets and CSV loading for the CLI
"""

import math
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from config.settings import DATASETS, DEFAULT_DATA_SEED, DEFAULT_DATASET_SIZE
from core.errors import ConfigurationError
from graph.families import compile_generative, init_params
from graph.model_graph import ModelGraph
from graph.sampling import ancestral_sample
from utils.logging_utils import get_logger
from utils.rng import make_rng

logger = get_logger(__name__)

# 4x4 strokes switched on by the four z1 bits: top row, bottom row, left column, right column
_STROKES = np.zeros((4, 16))
_STROKES[0, 0:4] = 1.0
_STROKES[1, 12:16] = 1.0
_STROKES[2, 0::4] = 1.0
_STROKES[3, 3::4] = 1.0
# z2 -> z1 logits of the fixed mini-digits generator
_DIGIT_WEIGHTS = np.array([[3.0, -3.0, 2.0, -2.0], [-2.0, 2.0, 3.0, -3.0]])
_DIGIT_BIAS = np.array([-0.5, -0.5, -1.0, -1.0])


# ------------------------------------------------------------------
# GENERATORS
# ------------------------------------------------------------------
def lingauss(count: int, rng: np.random.Generator, prior_mu: float = 0.0, prior_std: float = 1.0,
             weight: float = 1.0, bias: float = 0.0, noise_std: float = 0.5) -> np.ndarray:
    """x = weight * z + bias + noise, z ~ N(prior_mu, prior_std^2); shape (count, 1)"""
    z = prior_mu + prior_std * rng.standard_normal(count)
    return (weight * z + bias + noise_std * rng.standard_normal(count)).reshape(-1, 1)


def pinwheel(count: int, rng: np.random.Generator, arms: int = 5, radial_std: float = 0.5,
             tangential_std: float = 0.05, shift: float = 1.2) -> np.ndarray:
    """2-D mixture of ``arms`` elongated Gaussians rotated around the origin; shape (count, 2)"""
    labels = rng.integers(0, arms, size=count)
    local = np.stack([
        shift + radial_std * rng.standard_normal(count),
        tangential_std * rng.standard_normal(count),
    ], axis=1)
    angle = 2.0 * math.pi * labels / arms
    cos, sin = np.cos(angle), np.sin(angle)
    return np.stack([cos * local[:, 0] - sin * local[:, 1], sin * local[:, 0] + cos * local[:, 1]], axis=1)


def minidigits(count: int, rng: np.random.Generator, on: float = 0.9, off: float = 0.05) -> np.ndarray:
    """
    16-pixel binary images from a fixed two-layer generator

    z2 ~ Bernoulli(1/2)^2, z1 | z2 ~ Bernoulli(sigmoid(z2 W + b))^4 picks
    strokes, and each pixel is on with probability ``on`` when a chosen
    stroke covers it and ``off`` otherwise.
    """
    z2 = (rng.uniform(size=(count, 2)) < 0.5).astype(np.float64)
    z1 = (rng.uniform(size=(count, 4)) < expit(z2 @ _DIGIT_WEIGHTS + _DIGIT_BIAS)).astype(np.float64)
    covered = (z1 @ _STROKES) > 0
    probs = np.where(covered, on, off)
    return (rng.uniform(size=probs.shape) < probs).astype(np.float64)


def model_samples(graph: ModelGraph, count: int, rng: np.random.Generator) -> Dict[str, np.ndarray]:
    """Observed columns of ancestral draws from freshly initialized generative parameters"""
    families = compile_generative(graph)
    theta = init_params(families, rng)
    sample = ancestral_sample(graph, theta, count, rng, families=families)
    return {name: sample[name].numpy() for name in graph.observed()}


# ------------------------------------------------------------------
# ASSIGNMENT TO VARIABLES
# ------------------------------------------------------------------
def split_columns(graph: ModelGraph, observed: Sequence[str], columns: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Hand consecutive columns to the observed variables in topological order

    Raises:
        ConfigurationError: the total observed width does not match
    """
    order = [n for n in graph.topological_order if n in set(observed)]
    widths = [graph.variable(n).width for n in order]
    if sum(widths) != columns.shape[1]:
        raise ConfigurationError(
            f"dataset has {columns.shape[1]} columns but observed variables {order} need {sum(widths)}"
        )
    out = {}
    start = 0
    for name, width in zip(order, widths):
        out[name] = columns[:, start:start + width]
        start += width
    return out


def _float_options(options: Mapping[str, str], skip: Sequence[str] = ("size", "seed")) -> Dict[str, float]:
    out = {}
    for key, value in options.items():
        if key in skip:
            continue
        try:
            out[key] = float(value)
        except ValueError:
            raise ConfigurationError(f"dataset option '{key}': expected a number, got '{value}'") from None
    return out


def toy_dataset(name: str, graph: ModelGraph, observed: Sequence[str],
                options: Optional[Mapping[str, str]] = None, size: Optional[int] = None) -> Dict[str, np.ndarray]:
    """
    Generate a named toy dataset for the observed variables

    Args:
        name: lingauss | pinwheel | minidigits | model
        graph: model graph the data is for
        observed: observed-role variables
        options: dataset block options (``size``, ``seed`` and generator keywords)
        size: row count, overriding the options

    Raises:
        ConfigurationError: unknown dataset, bad option or shape mismatch
    """
    options = dict(options or {})
    if name not in DATASETS:
        raise ConfigurationError(f"unknown dataset '{name}' (choose from {', '.join(DATASETS)})")
    count = size or int(options.get("size", DEFAULT_DATASET_SIZE))
    rng = make_rng(int(options.get("seed", DEFAULT_DATA_SEED)))
    kwargs = _float_options(options)
    try:
        if name == "model":
            data = model_samples(graph.with_roles(observed), count, rng)
        elif name == "lingauss":
            data = split_columns(graph, observed, lingauss(count, rng, **kwargs))
        elif name == "pinwheel":
            if "arms" in kwargs:
                kwargs["arms"] = int(kwargs["arms"])
            data = split_columns(graph, observed, pinwheel(count, rng, **kwargs))
        else:
            data = split_columns(graph, observed, minidigits(count, rng, **kwargs))
    except TypeError as exc:
        raise ConfigurationError(f"dataset '{name}': {exc}") from None
    logger.info("[data] %s: %d rows for %s", name, count, ", ".join(sorted(data)))
    return data


def load_csv(path: Union[str, Path], graph: ModelGraph, observed: Sequence[str]) -> Dict[str, np.ndarray]:
    """
    Read observations from CSV; a variable's columns are ``<var>`` or ``<var>_0 .. <var>_{w-1}``

    Empty cells become NaN (missing under the ``missing`` mask policy).

    Raises:
        ConfigurationError: unreadable file or missing columns
    """
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise ConfigurationError(f"cannot read data file {path}: {exc}") from None
    data = {}
    for name in observed:
        width = graph.variable(name).width
        if name in frame.columns:
            columns = [name]
        else:
            columns = [f"{name}_{j}" for j in range(width)]
            absent = [c for c in columns if c not in frame.columns]
            if absent:
                raise ConfigurationError(f"data file {path} has no column '{name}' or {absent}")
        data[name] = frame[columns].to_numpy(dtype=np.float64)
    logger.info("[data] %s: %d rows", path, len(frame))
    return data
