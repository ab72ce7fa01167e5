"""
Binary checkpoint container

  magic "ADMP" | u32 version | u32 n + JSON metadata | u32 array count
  | per array: u32 n + name, u32 ndim, u64 shape..., f8 little-endian data
  | u32 n + RNG state JSON | u64 step | u32 crc32 of everything before it
"""

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from config.settings import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from core.errors import (
    CheckpointCorruptError,
    CheckpointFormatError,
    CheckpointVersionError,
    ConfigurationError,
)
from core.optim import OptimizerState
from trainer.state import TrainConfig, TrainState
from utils.logging_utils import get_logger
from utils.rng import decode_rng_state, encode_rng_state

logger = get_logger(__name__)

GROUPS = ("theta", "phi", "xi")
_OPTIMIZER_FIELDS = ("lr", "beta1", "beta2", "epsilon", "t", "kind")


def _pack_bytes(blob: bytes) -> bytes:
    return struct.pack("<I", len(blob)) + blob


def _named_arrays(state: TrainState) -> List[Tuple[str, np.ndarray]]:
    arrays = []
    for group in GROUPS:
        params = state.group(group)
        for name in sorted(params):
            arrays.append((f"{group}/{name}", params[name]))
    for key in sorted(state.optimizers):
        opt = state.optimizers[key]
        for moment, values in (("m", opt.m), ("v", opt.v)):
            for name in sorted(values):
                arrays.append((f"opt/{key}/{moment}/{name}", values[name]))
    return arrays


def encode_checkpoint(state: TrainState, config: Optional[TrainConfig] = None,
                      extra: Optional[Mapping[str, Any]] = None) -> bytes:
    """Serialize a training state; the result decodes back bitwise"""
    metadata = {
        "config": config.to_dict() if config is not None else None,
        "optimizers": {
            key: {f: getattr(opt, f) for f in _OPTIMIZER_FIELDS}
            for key, opt in sorted(state.optimizers.items())
        },
        "extra": dict(extra or {}),
    }
    parts = [
        CHECKPOINT_MAGIC,
        struct.pack("<I", CHECKPOINT_VERSION),
        _pack_bytes(json.dumps(metadata, sort_keys=True).encode("utf-8")),
    ]
    arrays = _named_arrays(state)
    parts.append(struct.pack("<I", len(arrays)))
    for name, values in arrays:
        values = np.ascontiguousarray(values, dtype="<f8")
        parts.append(_pack_bytes(name.encode("utf-8")))
        parts.append(struct.pack("<I", values.ndim))
        parts.append(struct.pack(f"<{values.ndim}Q", *values.shape))
        parts.append(values.tobytes())
    parts.append(_pack_bytes(encode_rng_state(state.rng)))
    parts.append(struct.pack("<Q", state.step))
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


class _Reader:
    def __init__(self, blob: bytes, start: int):
        self.blob = blob
        self.offset = start

    def take(self, count: int) -> bytes:
        end = self.offset + count
        if end > len(self.blob):
            raise CheckpointCorruptError(f"checkpoint truncated at byte {self.offset} (wanted {count} more)")
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def sized(self) -> bytes:
        (count,) = self.unpack("<I")
        return self.take(count)


def decode_checkpoint(blob: bytes) -> Tuple[TrainState, Dict[str, Any]]:
    """
    Parse checkpoint bytes

    Returns:
        (state, metadata)

    Raises:
        CheckpointFormatError: wrong magic bytes
        CheckpointVersionError: unsupported format version
        CheckpointCorruptError: truncated payload or checksum mismatch
    """
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"not a checkpoint: expected magic {CHECKPOINT_MAGIC!r}, got {blob[:4]!r}")
    reader = _Reader(blob, len(CHECKPOINT_MAGIC))
    try:
        (version,) = reader.unpack("<I")
    except CheckpointCorruptError:
        raise CheckpointCorruptError("checkpoint truncated inside the header") from None
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"checkpoint format version {version}, this build reads {CHECKPOINT_VERSION}")
    if len(blob) < reader.offset + 4:
        raise CheckpointCorruptError("checkpoint truncated inside the header")
    body, (stored,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored:
        raise CheckpointCorruptError("checkpoint checksum mismatch (file truncated or modified)")

    reader = _Reader(body, reader.offset)
    try:
        metadata = json.loads(reader.sized().decode("utf-8"))
        (count,) = reader.unpack("<I")
        arrays: Dict[str, np.ndarray] = {}
        for _ in range(count):
            name = reader.sized().decode("utf-8")
            (ndim,) = reader.unpack("<I")
            shape = reader.unpack(f"<{ndim}Q") if ndim else ()
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(reader.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
        rng = decode_rng_state(reader.sized())
        (step,) = reader.unpack("<Q")
    except (ValueError, KeyError, UnicodeDecodeError) as err:
        raise CheckpointCorruptError(f"checkpoint payload unreadable: {err}") from err
    if reader.offset != len(body):
        raise CheckpointCorruptError(f"{len(body) - reader.offset} trailing bytes after the step counter")

    groups: Dict[str, Dict[str, np.ndarray]] = {g: {} for g in GROUPS}
    moments: Dict[str, Dict[str, Dict[str, np.ndarray]]] = {}
    for name, values in arrays.items():
        head, _, rest = name.partition("/")
        if head in groups:
            groups[head][rest] = values
        elif head == "opt":
            key, moment, param = rest.split("/", 2)
            moments.setdefault(key, {"m": {}, "v": {}})[moment][param] = values
        else:
            raise CheckpointCorruptError(f"unknown array '{name}' in checkpoint")

    optimizers = {}
    for key, fields in metadata.get("optimizers", {}).items():
        stored_moments = moments.get(key, {"m": {}, "v": {}})
        optimizers[key] = OptimizerState(**fields, m=stored_moments["m"], v=stored_moments["v"])

    state = TrainState(
        theta=groups["theta"], phi=groups["phi"], xi=groups["xi"],
        optimizers=optimizers, step=int(step), rng=rng,
    )
    return state, metadata


def checkpoint_save(state: TrainState, path: Union[str, Path], config: Optional[TrainConfig] = None,
                    extra: Optional[Mapping[str, Any]] = None) -> Path:
    """Write a checkpoint; the file is replaced atomically"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(state, config, extra)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    logger.info("[checkpoint] saved step %d to %s (%d bytes)", state.step, path, len(blob))
    return path


def read_checkpoint(path: Union[str, Path]) -> Tuple[TrainState, Dict[str, Any]]:
    """Load state and metadata (config dict under 'config')"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointFormatError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())


def checkpoint_load(path: Union[str, Path]) -> TrainState:
    return read_checkpoint(path)[0]


def check_shapes(loaded: TrainState, expected: TrainState) -> None:
    """
    Compare parameter names and shapes group by group

    Raises:
        ConfigurationError: listing every missing, unexpected or reshaped parameter
    """
    problems = []
    for group in GROUPS:
        have, want = loaded.group(group), expected.group(group)
        for name in sorted(set(want) - set(have)):
            problems.append(f"{name} (missing)")
        for name in sorted(set(have) - set(want)):
            problems.append(f"{name} (unexpected)")
        for name in sorted(set(have) & set(want)):
            if np.shape(have[name]) != np.shape(want[name]):
                problems.append(f"{name} {np.shape(have[name])} != {np.shape(want[name])}")
    if problems:
        raise ConfigurationError(
            "checkpoint does not match the model spec; offending parameters: " + ", ".join(problems)
        )
