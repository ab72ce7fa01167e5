"""
Training metrics: JSON-lines sink and a pandas view of the history
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from utils.logging_utils import get_logger

logger = get_logger(__name__)

Row = Dict[str, Any]

# written by _plain for non-finite floats
_NON_FINITE = {"nan": math.nan, "inf": math.inf, "-inf": -math.inf}


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


class MetricsSink:
    """
    Collects metric rows and mirrors them to a JSONL file

    The first row of a fresh file is the header (variant, config hash, seed).

    Args:
        path: output file, or None to keep rows in memory only
        append: continue an existing file (resumed runs)
    """

    def __init__(self, path: Optional[Union[str, Path]] = None, append: bool = False):
        self.path = Path(path) if path else None
        self.rows: List[Row] = []
        self._handle = None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "a" if append else "w", encoding="utf-8")

    def header(self, **fields: Any) -> None:
        self.write({"header": True, **fields})

    def write(self, row: Row) -> None:
        row = _plain(row)
        self.rows.append(row)
        if self._handle is not None:
            self._handle.write(json.dumps(row, sort_keys=True) + "\n")
            self._handle.flush()

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "MetricsSink":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: Union[str, Path]) -> List[Row]:
    """Parse a metrics file; blank lines are skipped"""
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def metrics_history(rows: Iterable[Row]) -> pd.DataFrame:
    """
    Flatten metric rows (header excluded) into one column per leaf

    Nested keys are joined with dots, e.g. ``disc_mean.z1.top``.
    """
    body = [r for r in rows if not r.get("header")]
    if not body:
        return pd.DataFrame(columns=["step"])
    frame = pd.json_normalize(body, sep=".")
    for column in frame.columns:
        if frame[column].dtype == object:
            restored = frame[column].map(lambda v: _NON_FINITE.get(v, v) if isinstance(v, str) else v)
            converted = pd.to_numeric(restored, errors="coerce")
            if converted.notna().sum() == restored.notna().sum():
                frame[column] = converted
    return frame.sort_values("step").reset_index(drop=True)


def last_value(rows: Iterable[Row], key: str, default: float = float("nan")) -> float:
    """Most recent value of a dotted metric key"""
    history = metrics_history(rows)
    if key not in history.columns or history.empty:
        return default
    series = history[key].dropna()
    return float(series.iloc[-1]) if len(series) else default
