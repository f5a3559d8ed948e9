"""SNCW weight files and their SNCO optimizer checkpoints.

Weights layout (little-endian): magic "SNCW", u32 version, 32-byte sha256
digest of the encoder architecture, u32 tensor count, then per tensor a u32
name length, the utf-8 name, u32 rank, u32 dims and the f32 data.

A checkpoint sits next to the weights with the ".opt" suffix: magic "SNCO",
u32 version, u32 next epoch, u32 optimizer step, then the Adam moments as
named f64 tensors ("m.<name>", "v.<name>") in the same tensor layout.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from db.base import PathLike, Reader, atomic_write_bytes, pack_u32, read_magic, shape_of
from models.errors import WeightsFormatError
from models.schemas import EncoderConfig
from network.encoder import WEIGHTS_VERSION, ModelWeights, check_weights, config_digest
from network.training import OptimizerState

logger = logging.getLogger(__name__)

MAGIC = b"SNCW"
CHECKPOINT_MAGIC = b"SNCO"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True, eq=False)
class TrainingCheckpoint:
    next_epoch: int
    state: OptimizerState


def _encode_tensors(tensors: Dict[str, np.ndarray], dtype: str) -> bytes:
    parts = [pack_u32(len(tensors))]
    for name, value in tensors.items():
        raw = name.encode("utf-8")
        parts.append(pack_u32(len(raw)) + raw)
        parts.append(pack_u32(value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype=dtype).tobytes())
    return b"".join(parts)


def _decode_tensors(reader: Reader, dtype: str) -> Dict[str, np.ndarray]:
    width = np.dtype(dtype).itemsize
    tensors = {}
    for _ in range(reader.u32("tensor count")):
        raw = reader.take(reader.u32("name length"), "tensor name")
        try:
            name = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightsFormatError(f"{reader.source}: tensor name is not valid utf-8 ({exc.reason}).") from exc
        shape = shape_of(reader, name)
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(reader.take(width * count, f"data of {name}"), dtype=dtype)
        tensors[name] = data.astype(np.dtype(dtype).type).reshape(shape)
    if reader.remaining():
        raise WeightsFormatError(f"{reader.source}: {reader.remaining()} trailing bytes.")
    return tensors


def encode_weights(weights: ModelWeights) -> bytes:
    header = MAGIC + pack_u32(weights.version) + weights.config_digest
    return header + _encode_tensors(weights.tensors, "<f4")


def decode_weights(payload: bytes, source: str = "<bytes>") -> ModelWeights:
    reader = Reader(payload, source)
    read_magic(reader, MAGIC)
    version = reader.u32("version")
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"{source}: unsupported weights version {version}.")
    digest = reader.take(32, "config digest")
    return ModelWeights(tensors=_decode_tensors(reader, "<f4"), version=version, config_digest=digest)


def save_weights(weights: ModelWeights, path: PathLike) -> None:
    atomic_write_bytes(path, encode_weights(weights))
    logger.debug("Wrote %d tensors to %s", len(weights.tensors), path)


def _read(path: Path, what: str) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise WeightsFormatError(f"Cannot read {what} {path}: {exc}") from exc


def load_weights(path: PathLike, cfg: Optional[EncoderConfig] = None) -> ModelWeights:
    """Read a weight file; with `cfg`, shapes are checked against the architecture.

    A shape mismatch raises ShapeError naming the layer. A digest mismatch
    with matching shapes is only logged.
    """
    path = Path(path)
    weights = decode_weights(_read(path, "weights"), str(path))
    if cfg is not None:
        check_weights(weights, cfg)
        if weights.config_digest != config_digest(cfg):
            logger.warning("Weights %s were saved for a different encoder configuration", path)
    return weights


def checkpoint_path(weights_path: PathLike) -> Path:
    return Path(weights_path).with_suffix(".opt")


def encode_checkpoint(checkpoint: TrainingCheckpoint) -> bytes:
    state = checkpoint.state
    moments = {f"m.{k}": v for k, v in state.m.items()}
    moments.update({f"v.{k}": v for k, v in state.v.items()})
    header = CHECKPOINT_MAGIC + pack_u32(CHECKPOINT_VERSION, checkpoint.next_epoch, state.step)
    return header + _encode_tensors(moments, "<f8")


def decode_checkpoint(payload: bytes, source: str = "<bytes>") -> TrainingCheckpoint:
    reader = Reader(payload, source)
    read_magic(reader, CHECKPOINT_MAGIC)
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise WeightsFormatError(f"{source}: unsupported checkpoint version {version}.")
    next_epoch = reader.u32("next epoch")
    step = reader.u32("optimizer step")
    m, v = {}, {}
    for key, value in _decode_tensors(reader, "<f8").items():
        kind, _, name = key.partition(".")
        if kind not in ("m", "v") or not name:
            raise WeightsFormatError(f"{source}: unexpected checkpoint tensor {key!r}.")
        (m if kind == "m" else v)[name] = value
    return TrainingCheckpoint(next_epoch=next_epoch, state=OptimizerState(step=step, m=m, v=v))


def save_checkpoint(checkpoint: TrainingCheckpoint, weights_path: PathLike) -> Path:
    path = checkpoint_path(weights_path)
    atomic_write_bytes(path, encode_checkpoint(checkpoint))
    logger.debug("Wrote optimizer checkpoint (epoch %d, step %d) to %s", checkpoint.next_epoch, checkpoint.state.step, path)
    return path


def load_checkpoint(weights_path: PathLike) -> Optional[TrainingCheckpoint]:
    """The checkpoint saved next to `weights_path`, or None if there is none."""
    path = checkpoint_path(weights_path)
    if not path.exists():
        return None
    return decode_checkpoint(_read(path, "optimizer checkpoint"), str(path))
