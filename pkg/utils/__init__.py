from utils.logging_utils import get_logger
from utils.rng import make_rng
