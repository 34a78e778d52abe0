"""
Stage 1: description embedding to keypoint heatmaps
"""
from .models import TextToPoseGenerator, PoseCritic, init_weights
from .losses import (
    critic_loss,
    interpolate_samples,
    gradient_penalty,
    critic_objective,
    generator_loss,
)
from .service import (
    HeatmapEmbeddingDataset,
    T2PTrainResult,
    gt_forward,
    dt_forward,
    draw_noise,
    generate_keypoints,
    train_t2p,
    generator_from_checkpoint,
    critic_from_checkpoint,
)

__all__ = [
    "TextToPoseGenerator",
    "PoseCritic",
    "init_weights",
    "critic_loss",
    "interpolate_samples",
    "gradient_penalty",
    "critic_objective",
    "generator_loss",
    "HeatmapEmbeddingDataset",
    "T2PTrainResult",
    "gt_forward",
    "dt_forward",
    "draw_noise",
    "generate_keypoints",
    "train_t2p",
    "generator_from_checkpoint",
    "critic_from_checkpoint",
]
