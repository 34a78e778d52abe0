"""
Stage 3: attention-gated pose rendering and whole-pipeline inference
"""
from .models import (
    attention_gate,
    ResidualBlock,
    PoseRenderGenerator,
    PatchDiscriminator,
    FeatureExtractor,
    RandomConvFeatureExtractor,
    VGGFeatureExtractor,
)
from .losses import (
    bce,
    adv_loss_g,
    discriminator_objective,
    perceptual_terms,
    perceptual_loss,
    generator_objective,
)
from .service import (
    RenderPair,
    RenderPairDataset,
    RenderTrainResult,
    train_render,
    renderer_from_checkpoint,
    render_image,
)
from .inference import (
    PipelineCheckpoints,
    InferenceResult,
    infer_pipeline,
    infer_from_embedding,
    interpolation_demo,
)

__all__ = [
    "attention_gate",
    "ResidualBlock",
    "PoseRenderGenerator",
    "PatchDiscriminator",
    "FeatureExtractor",
    "RandomConvFeatureExtractor",
    "VGGFeatureExtractor",
    "bce",
    "adv_loss_g",
    "discriminator_objective",
    "perceptual_terms",
    "perceptual_loss",
    "generator_objective",
    "RenderPair",
    "RenderPairDataset",
    "RenderTrainResult",
    "train_render",
    "renderer_from_checkpoint",
    "render_image",
    "PipelineCheckpoints",
    "InferenceResult",
    "infer_pipeline",
    "infer_from_embedding",
    "interpolation_demo",
]
