"""
Logging setup shared by the engine and the CLI
"""

import logging
from pathlib import Path
from typing import Optional

from config.settings import LOG_FILE, LOG_FORMAT, LOG_LEVEL

_CONFIGURED = False


def configure_logging(level: Optional[str] = None, log_file: Optional[str] = None) -> None:
    """
    Configure the root logger once

    Args:
        level: level name (defaults to LOG_LEVEL)
        log_file: optional file path (defaults to LOG_FILE; empty means stderr only)
    """
    global _CONFIGURED
    level = (level or LOG_LEVEL).upper()
    log_file = LOG_FILE if log_file is None else log_file

    handlers = [logging.StreamHandler()]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))

    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    _CONFIGURED = True


def get_logger(name: str) -> logging.Logger:
    """Get a module logger"""
    return logging.getLogger(name)
