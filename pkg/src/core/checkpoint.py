"""
Checkpoint files: model config, weights and inference constants.

Layout (little endian):

    b"DXNET" magic, version byte
    u32 length + UTF-8 JSON header (config, constants, metadata, tensor names)
    per tensor: u32 name length, name, u32 rank, u32 dims, float64 values
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from src.config_validator import ModelConfig
from src.model.extractor import AttractorPair
from src.model.network import ModelParams, param_shapes
from src.utils.error_handlers import CheckpointError
from src.utils.file_io import atomic_write_bytes
from src.utils.structured_logger import get_logger

logger = get_logger(__name__)

MAGIC = b"DXNET"
FORMAT_VERSION = 1
STATS_PREFIX = "stats."

_U32 = struct.Struct("<I")


@dataclass
class Checkpoint:
    """Trained weights plus the constants their variant needs at inference."""

    params: ModelParams
    preset_extractor: Optional[np.ndarray] = None
    attractor_pair: Optional[AttractorPair] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    # per-utterance training extractors, (N, K)
    train_extractors: Optional[np.ndarray] = None
    train_anchor_extractors: Optional[np.ndarray] = None

    @property
    def model_config(self) -> ModelConfig:
        return self.params.config

    @property
    def variant(self) -> str:
        return self.params.config.variant

    def missing_constants(self) -> List[str]:
        """Names of inference constants the variant needs but this checkpoint lacks."""
        missing = []
        if self.variant in ("denet", "danet_anchor") and self.preset_extractor is None:
            missing.append("preset extractor")
        if self.variant == "danet" and self.attractor_pair is None:
            missing.append("fixed attractor pair")
        return missing


def _vector(values: Optional[List[float]]) -> Optional[np.ndarray]:
    return None if values is None else np.asarray(values, dtype=np.float64)


def _header(c: Checkpoint, tensors: Dict[str, np.ndarray]) -> Dict[str, Any]:
    pair = c.attractor_pair
    preset = c.preset_extractor
    return {
        "config": c.model_config.to_dict(),
        "variant": c.variant,
        "constants": {
            "preset_extractor": None if preset is None else preset.tolist(),
            "attractor_pair": None if pair is None else [pair.a1.tolist(), pair.a2.tolist()],
        },
        "metadata": c.metadata,
        "tensor_names": list(tensors),
    }


def encode_checkpoint(c: Checkpoint) -> bytes:
    missing = c.missing_constants()
    if missing:
        raise CheckpointError(f"Checkpoint for {c.variant} is missing {', '.join(missing)}")

    tensors: Dict[str, np.ndarray] = dict(c.params.items())
    if c.train_extractors is not None:
        tensors[STATS_PREFIX + "train_extractors"] = c.train_extractors
    if c.train_anchor_extractors is not None:
        tensors[STATS_PREFIX + "train_anchor_extractors"] = c.train_anchor_extractors

    header = json.dumps(_header(c, tensors)).encode("utf-8")
    parts = [MAGIC, bytes([FORMAT_VERSION]), _U32.pack(len(header)), header]
    for name, value in tensors.items():
        encoded = name.encode("utf-8")
        value = np.ascontiguousarray(value, dtype="<f8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(value.ndim))
        parts.extend(_U32.pack(d) for d in value.shape)
        parts.append(value.tobytes())
    return b"".join(parts)


def save_checkpoint(c: Checkpoint, path: Union[str, Path]) -> Path:
    """Write a checkpoint atomically."""
    data = encode_checkpoint(c)
    path = atomic_write_bytes(path, data)
    logger.info("Checkpoint saved", path=str(path), variant=c.variant, bytes=len(data))
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise CheckpointError(
                f"truncated checkpoint while reading {what}",
                details={"offset": self.pos, "needed": n, "size": len(self.data)},
            )
        chunk = self.data[self.pos: end]
        self.pos = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(data: bytes) -> Checkpoint:
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError("bad magic: not a checkpoint file")
    version = reader.take(1, "version")[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"version mismatch: file has format {version}, expected {FORMAT_VERSION}"
        )

    try:
        header = json.loads(reader.take(reader.u32("header length"), "header").decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        names = list(header["tensor_names"])
        constants = header["constants"]
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError("corrupt checkpoint header", e)

    tensors: Dict[str, np.ndarray] = {}
    for expected in names:
        name = reader.take(reader.u32("name length"), "tensor name").decode("utf-8")
        if name != expected:
            raise CheckpointError(f"tensor {name!r} found where {expected!r} was expected")
        shape = tuple(reader.u32("dims") for _ in range(reader.u32("rank")))
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(8 * count, f"tensor {name}")
        tensors[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if reader.pos != len(data):
        raise CheckpointError(f"{len(data) - reader.pos} trailing bytes after tensors")

    stats = {
        k[len(STATS_PREFIX):]: tensors.pop(k) for k in list(tensors) if k.startswith(STATS_PREFIX)
    }
    _check_shapes(config, tensors)

    preset, pair = _decode_constants(constants, config.embed_dim)
    checkpoint = Checkpoint(
        params=ModelParams(tensors, config),
        preset_extractor=preset,
        attractor_pair=pair,
        metadata=header.get("metadata", {}),
        train_extractors=stats.get("train_extractors"),
        train_anchor_extractors=stats.get("train_anchor_extractors"),
    )
    missing = checkpoint.missing_constants()
    if missing:
        raise CheckpointError(f"{config.variant} checkpoint is missing {', '.join(missing)}")
    return checkpoint


def _decode_constants(
    constants: Dict[str, Any], embed_dim: int
) -> Tuple[Optional[np.ndarray], Optional[AttractorPair]]:
    try:
        preset = _vector(constants.get("preset_extractor"))
        pair_values = constants.get("attractor_pair")
        pair = None if pair_values is None else AttractorPair(*pair_values)
    except (ValueError, TypeError, AttributeError) as e:
        raise CheckpointError("corrupt inference constants", e)
    pair_a1 = None if pair is None else pair.a1
    for what, v in (("preset extractor", preset), ("attractor pair", pair_a1)):
        if v is not None and v.shape != (embed_dim,):
            raise CheckpointError(f"{what} has shape {v.shape}, expected ({embed_dim},)")
    return preset, pair


def _check_shapes(config: ModelConfig, tensors: Dict[str, np.ndarray]) -> None:
    expected: Dict[str, Tuple[int, ...]] = param_shapes(config)
    if list(tensors) != list(expected):
        raise CheckpointError(
            "checkpoint tensors do not match the model config",
            details={"missing": sorted(set(expected) - set(tensors)),
                     "unexpected": sorted(set(tensors) - set(expected))},
        )
    for name, shape in expected.items():
        if tensors[name].shape != tuple(shape):
            raise CheckpointError(
                f"tensor {name} has shape {tensors[name].shape}, config implies {shape}"
            )


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint.

    Raises:
        CheckpointError: bad magic, version mismatch, truncation, shape
            mismatch or missing inference constants
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}", e)
    checkpoint = decode_checkpoint(data)
    logger.debug("Checkpoint loaded", path=str(path), variant=checkpoint.variant)
    return checkpoint
