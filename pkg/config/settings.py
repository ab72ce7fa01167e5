"""
config/settings.py
Engine defaults for adversarial message passing.
Safe at import time; a local .env file may override the env-driven keys.
"""

import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

# ------------------------------------------------------------------
# PATHS & DIRECTORIES
# ------------------------------------------------------------------
BASE_DIR = Path(__file__).parent.parent
MODELS_DIR = BASE_DIR / "models"
RUNS_DIR = BASE_DIR / "runs"

load_dotenv(BASE_DIR / ".env")

# ------------------------------------------------------------------
# LOGGING
# ------------------------------------------------------------------
LOG_LEVEL = os.getenv("ADMP_LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("ADMP_LOG_FILE", "")  # empty -> stderr only
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# ------------------------------------------------------------------
# NUMERICS
# ------------------------------------------------------------------
LOGIT_CLAMP = 30.0
LOG_FLOOR = 1e-300  # probabilities are floored here before taking logs

# ------------------------------------------------------------------
# NETWORKS
# ------------------------------------------------------------------
DISCRIMINATOR_HIDDEN = (64, 64)
DISCRIMINATOR_ACTIVATION = "tanh"
INFERENCE_HIDDEN = (64, 64)
INFERENCE_ACTIVATION = "tanh"
GENERATOR_HIDDEN = (64, 64)
GENERATOR_ACTIVATION = "tanh"

# ------------------------------------------------------------------
# OPTIMIZATION
# ------------------------------------------------------------------
ADAM_BETAS = (0.9, 0.999)
ADAM_EPSILON = 1e-8
DEFAULT_OPTIMIZER = "adam"
DEFAULT_LR_THETA = 1e-3
DEFAULT_LR_PHI = 1e-3
DEFAULT_LR_XI = 1e-3

# ------------------------------------------------------------------
# TRAINING
# ------------------------------------------------------------------
DEFAULT_ITERATIONS = 1000
DEFAULT_MINIBATCH = 64
DEFAULT_PARTICLES_L = 1
DEFAULT_PARTICLES_K = 64
DEFAULT_ND = 1
DEFAULT_SEED = 0
METRICS_EVERY = 100
MASK_POLICIES = ("full", "missing", "drop")

# ------------------------------------------------------------------
# ORACLES
# ------------------------------------------------------------------
QUADRATURE_POINTS_1D = 2 ** 14
QUADRATURE_POINTS_2D = 2 ** 9
QUADRATURE_SPAN_SIGMAS = 8.0
QUADRATURE_TOLERANCE = 1e-4
ENUMERATION_LIMIT = 10 ** 6
REPORT_SAMPLES = 10 ** 4
ORACLE_GRID = (-2.0, -1.0, 0.0, 1.0, 2.0)

# ------------------------------------------------------------------
# GRADIENT CHECKS
# ------------------------------------------------------------------
GRADCHECK_STEP = 1e-5
GRADCHECK_TOLERANCE = 1e-4

# ------------------------------------------------------------------
# CHECKPOINTS
# ------------------------------------------------------------------
CHECKPOINT_MAGIC = b"ADMP"
CHECKPOINT_VERSION = 1
CHECKPOINT_SUFFIX = ".admp"

# ------------------------------------------------------------------
# CLI & DATASETS
# ------------------------------------------------------------------
DATASETS = ("lingauss", "pinwheel", "minidigits", "model")
DEFAULT_DATASET_SIZE = 10_000
DEFAULT_DATA_SEED = 1234  # data stays fixed across training seeds
COMPARE_MMD_SAMPLES = 500
PLOT_SAMPLES = 2000
MANIFEST_FILE = "manifest.json"
METRICS_FILE = "metrics.jsonl"
REPORT_FILE = "report.json"


# ------------------------------------------------------------------
# ENV-DRIVEN HELPERS
# ------------------------------------------------------------------
def parse_int_env(value: Optional[str], name: str, minimum: int = 1) -> Optional[int]:
    """
    Parse an integer environment value

    Args:
        value: raw string (None or blank means unset)
        name: variable name, used in the error message
        minimum: smallest accepted value

    Returns:
        Parsed integer, or None when unset

    Raises:
        ValueError: If the value is not an integer >= minimum
    """
    if value is None or not value.strip():
        return None
    try:
        parsed = int(value.strip())
    except ValueError:
        parsed = None
    if parsed is None or parsed < minimum:
        raise ValueError(
            f"{name}={value!r} is not valid!\n\n"
            f"→ Expected an integer >= {minimum}\n"
            f"→ Set it in the environment or in {BASE_DIR / '.env'}"
        )
    return parsed


def get_thread_limit() -> int:
    """Worker cap for parallel experiment cells (ADMP_THREADS, default: CPU count)"""
    limit = parse_int_env(os.getenv("ADMP_THREADS"), "ADMP_THREADS")
    if limit is None:
        limit = os.cpu_count() or 1
    return limit
