"""
Shared fixtures
"""

import numpy as np
import pytest

from config.settings import MODELS_DIR
from utils.rng import make_rng


@pytest.fixture
def rng() -> np.random.Generator:
    return make_rng(0)


@pytest.fixture
def models_dir():
    return MODELS_DIR


@pytest.fixture
def lingauss_spec():
    return MODELS_DIR / "lingauss.model"


@pytest.fixture
def chain_spec():
    return MODELS_DIR / "chain.model"


@pytest.fixture
def discrete_spec():
    return MODELS_DIR / "discrete.model"
