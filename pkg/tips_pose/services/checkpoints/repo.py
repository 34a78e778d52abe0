"""
Checkpoint persistence layer

File layout: 8-byte magic, uint32 format version, uint64 header length, a
UTF-8 JSON header (stage, iteration, config echo, metadata, block names and
shapes, payload CRC) and the concatenated little-endian float32 blocks.
"""
import json
import os
import struct
import zlib
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from ...errors import TipsError
from .models import CHECKPOINT_FORMAT_VERSION, Checkpoint


MAGIC = b"TIPSCKPT"
_PREAMBLE = struct.Struct("<8sIQ")


class CheckpointError(TipsError):
    """Base class for checkpoint problems"""
    pass


class CorruptCheckpointError(CheckpointError):
    """Raised when a checkpoint file is truncated or inconsistent"""
    pass


class CheckpointVersionError(CheckpointError):
    """Raised when a checkpoint was written by an incompatible format version"""
    pass


class StageTagMismatchError(CheckpointError):
    """Raised when a checkpoint belongs to a different stage than requested"""
    pass


def save_checkpoint(ckpt: Checkpoint, path: Path) -> Path:
    """
    Write a checkpoint atomically (temp file + rename).

    Args:
        ckpt: Checkpoint to persist
        path: Destination file

    Returns:
        The written path

    Raises:
        CorruptCheckpointError: If a block's size does not match its shape
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    for name, block in ckpt.blocks.items():
        array = np.ascontiguousarray(block, dtype="<f4")
        if array.size != int(np.prod(array.shape, dtype=np.int64)):
            raise CorruptCheckpointError(f"Block '{name}' element count does not match its shape")
        entries.append({"name": name, "shape": list(array.shape)})
        chunks.append(array.tobytes())
    payload = b"".join(chunks)

    header = json.dumps({
        "stage": ckpt.stage,
        "iteration": ckpt.iteration,
        "config": ckpt.config,
        "metadata": ckpt.metadata,
        "blocks": entries,
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
    }, sort_keys=True).encode("utf-8")

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_PREAMBLE.pack(MAGIC, ckpt.format_version, len(header)))
        f.write(header)
        f.write(payload)
    os.replace(tmp, path)
    logger.info(f"Saved {ckpt.stage} checkpoint ({len(entries)} blocks, {len(payload)} bytes) to {path}")
    return path


def load_checkpoint(path: Path, expected_stage: Optional[str] = None) -> Checkpoint:
    """
    Read a checkpoint, validating every structural field before returning.

    Args:
        path: Checkpoint file
        expected_stage: If given, the stage tag the file must carry

    Returns:
        Fully loaded Checkpoint

    Raises:
        CheckpointError: If the file does not exist
        CorruptCheckpointError: On truncation, bad magic, size or CRC mismatch
        CheckpointVersionError: On an unsupported format version
        StageTagMismatchError: If the stage tag differs from expected_stage
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    raw = path.read_bytes()

    if len(raw) < _PREAMBLE.size:
        raise CorruptCheckpointError(f"{path}: file too short for a checkpoint header")
    magic, version, header_len = _PREAMBLE.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CorruptCheckpointError(f"{path}: not a checkpoint file")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {CHECKPOINT_FORMAT_VERSION}")
    start = _PREAMBLE.size
    if len(raw) < start + header_len:
        raise CorruptCheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[start:start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptCheckpointError(f"{path}: unreadable header ({e})") from e

    if expected_stage is not None and header["stage"] != expected_stage:
        raise StageTagMismatchError(f"{path}: holds a '{header['stage']}' checkpoint, expected '{expected_stage}'")

    payload = raw[start + header_len:]
    expected_bytes = sum(4 * int(np.prod(e["shape"], dtype=np.int64)) for e in header["blocks"])
    if len(payload) != expected_bytes or header["payload_bytes"] != expected_bytes:
        raise CorruptCheckpointError(
            f"{path}: payload has {len(payload)} bytes, blocks need {expected_bytes}"
        )
    if zlib.crc32(payload) != header["crc32"]:
        raise CorruptCheckpointError(f"{path}: payload checksum mismatch")

    blocks = {}
    offset = 0
    for entry in header["blocks"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        blocks[entry["name"]] = np.frombuffer(payload, dtype="<f4", count=count, offset=offset).reshape(entry["shape"]).copy()
        offset += 4 * count

    logger.debug(f"Loaded {header['stage']} checkpoint from {path} ({len(blocks)} blocks)")
    return Checkpoint(
        stage=header["stage"],
        blocks=blocks,
        config=header["config"],
        iteration=header["iteration"],
        metadata=header["metadata"],
        format_version=version,
    )
