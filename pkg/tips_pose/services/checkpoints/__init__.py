"""
Checkpoints - named float32 parameter blocks plus training metadata
"""
from .models import Checkpoint, CHECKPOINT_FORMAT_VERSION
from .repo import (
    save_checkpoint,
    load_checkpoint,
    CheckpointError,
    CorruptCheckpointError,
    CheckpointVersionError,
    StageTagMismatchError,
)

__all__ = [
    "Checkpoint",
    "CHECKPOINT_FORMAT_VERSION",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "CorruptCheckpointError",
    "CheckpointVersionError",
    "StageTagMismatchError",
]
