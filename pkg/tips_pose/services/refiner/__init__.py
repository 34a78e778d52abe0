"""
Stage 2: facial keypoint refinement
"""
from .models import RefineNet, FACE_VECTOR_DIM
from .service import (
    RefinementOutcome,
    RefinerTrainResult,
    refine,
    apply_refinement,
    facial_dataset,
    train_refiner,
    refiner_from_checkpoint,
)

__all__ = [
    "RefineNet",
    "FACE_VECTOR_DIM",
    "RefinementOutcome",
    "RefinerTrainResult",
    "refine",
    "apply_refinement",
    "facial_dataset",
    "train_refiner",
    "refiner_from_checkpoint",
]
