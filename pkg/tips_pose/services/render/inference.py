"""
Whole-pipeline inference: description to keypoints to refined keypoints to image
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import torch
from loguru import logger

from ...errors import ShapeMismatchError, TipsValidationError
from ...schemas import DescriptionRecord, KeypointSet
from ..checkpoints.models import STAGE_REFINER, STAGE_RENDER, STAGE_T2P, Checkpoint
from ..checkpoints.repo import load_checkpoint
from ..pose_core import DEFAULT_THRESHOLD, image_heatmap_spec, render_heatmaps
from ..refiner.models import RefineNet
from ..refiner.service import apply_refinement, refiner_from_checkpoint
from ..text2pose.models import TextToPoseGenerator
from ..text2pose.service import draw_noise, generate_keypoints, generator_from_checkpoint
from ..text_encode import (
    AttributeSchema,
    EmbeddingMismatchError,
    TextEmbedding,
    encode_manyhot,
    lerp_embeddings,
)
from .models import PoseRenderGenerator
from .service import render_image, renderer_from_checkpoint


PoseSource = Union[KeypointSet, DescriptionRecord, TextEmbedding]
TextTarget = Union[DescriptionRecord, TextEmbedding]


@dataclass
class PipelineCheckpoints:
    """The three trained networks inference needs, with the stage-1 schema id"""
    generator: TextToPoseGenerator
    refiner: RefineNet
    renderer: PoseRenderGenerator
    schema_id: Optional[str] = None
    heatmap_sigma: float = 1.5
    occlusion_threshold: float = DEFAULT_THRESHOLD

    @classmethod
    def from_checkpoints(
        cls,
        t2p: Checkpoint,
        refiner: Checkpoint,
        render: Checkpoint,
        heatmap_sigma: float = 1.5,
        occlusion_threshold: float = DEFAULT_THRESHOLD,
    ) -> "PipelineCheckpoints":
        return cls(
            generator=generator_from_checkpoint(t2p),
            refiner=refiner_from_checkpoint(refiner),
            renderer=renderer_from_checkpoint(render),
            schema_id=t2p.metadata.get("schema_id"),
            heatmap_sigma=heatmap_sigma,
            occlusion_threshold=occlusion_threshold,
        )

    @classmethod
    def load(
        cls,
        t2p_path: Path,
        refiner_path: Path,
        render_path: Path,
        heatmap_sigma: float = 1.5,
        occlusion_threshold: float = DEFAULT_THRESHOLD,
    ) -> "PipelineCheckpoints":
        """
        Load and stage-check all three checkpoint files.

        Raises:
            CheckpointError: If a file is missing, corrupt or holds the wrong stage
        """
        return cls.from_checkpoints(
            load_checkpoint(t2p_path, expected_stage=STAGE_T2P),
            load_checkpoint(refiner_path, expected_stage=STAGE_REFINER),
            load_checkpoint(render_path, expected_stage=STAGE_RENDER),
            heatmap_sigma=heatmap_sigma,
            occlusion_threshold=occlusion_threshold,
        )

    @property
    def image_size(self) -> int:
        return self.renderer.cfg.image_size


@dataclass
class InferenceResult:
    """Rendered image plus every intermediate artifact"""
    image: np.ndarray
    source_keypoints: KeypointSet
    target_keypoints_raw: KeypointSet
    target_keypoints: KeypointSet
    attention_maps: Dict[int, np.ndarray]
    mode: str
    refinement_skipped: Dict[str, bool] = field(default_factory=dict)


def _embed(text: TextTarget, schema: Optional[AttributeSchema], checkpoints: PipelineCheckpoints) -> TextEmbedding:
    if isinstance(text, DescriptionRecord):
        if schema is None:
            raise TipsValidationError("A schema is required to encode description records")
        v = encode_manyhot(text, schema)
    else:
        v = text
    if checkpoints.schema_id is not None and v.schema_id is not None and v.schema_id != checkpoints.schema_id:
        raise EmbeddingMismatchError(
            f"Description uses schema {v.schema_id} but stage 1 was trained on {checkpoints.schema_id}"
        )
    if v.dim != checkpoints.generator.cfg.embed_dim:
        raise EmbeddingMismatchError(f"Embedding length {v.dim} != stage-1 embed_dim {checkpoints.generator.cfg.embed_dim}")
    return v


def _check_image(image_a: np.ndarray, size: int) -> np.ndarray:
    image = np.asarray(image_a, dtype=np.float32)
    if image.shape != (3, size, size):
        raise ShapeMismatchError(f"Source image must be 3 x {size} x {size}, got {image.shape}")
    return image


def infer_from_embedding(
    image_a: np.ndarray,
    source_pose: PoseSource,
    target: TextEmbedding,
    checkpoints: PipelineCheckpoints,
    noise_seed: int = 0,
    refine: bool = True,
    schema: Optional[AttributeSchema] = None,
) -> InferenceResult:
    """
    Run stages 1-3 for an already encoded target description.

    Target noise is drawn before source noise from one generator seeded with
    `noise_seed`, so both guidance modes share the target path.
    """
    size = checkpoints.image_size
    image = _check_image(image_a, size)
    rng = torch.Generator().manual_seed(noise_seed)
    noise_b = draw_noise(rng, checkpoints.generator.cfg.noise_dim)
    noise_a = draw_noise(rng, checkpoints.generator.cfg.noise_dim)
    skipped: Dict[str, bool] = {}

    raw_b, _ = generate_keypoints(
        target, checkpoints.generator, noise=noise_b, image_width=size, image_height=size,
        threshold=checkpoints.occlusion_threshold,
    )
    kps_b = raw_b
    if refine:
        kps_b, skipped["target"] = apply_refinement(raw_b, checkpoints.refiner)

    if isinstance(source_pose, KeypointSet):
        mode = "partial"
        kps_a = source_pose
        if (kps_a.image_width, kps_a.image_height) != (size, size):
            raise ShapeMismatchError(
                f"Source keypoints are in a {kps_a.image_width}x{kps_a.image_height} frame, image is {size}x{size}"
            )
    else:
        mode = "full"
        v_a = _embed(source_pose, schema, checkpoints)
        kps_a, _ = generate_keypoints(
            v_a, checkpoints.generator, noise=noise_a, image_width=size, image_height=size,
            threshold=checkpoints.occlusion_threshold,
        )
        if refine:
            kps_a, skipped["source"] = apply_refinement(kps_a, checkpoints.refiner)

    spec = image_heatmap_spec(size, checkpoints.heatmap_sigma)
    out, attention = render_image(
        checkpoints.renderer,
        image,
        render_heatmaps(kps_a, spec).values,
        render_heatmaps(kps_b, spec).values,
    )
    logger.debug(f"Inference ({mode}, refine={refine}, noise_seed={noise_seed}) produced a {size}x{size} image")
    return InferenceResult(
        image=out,
        source_keypoints=kps_a,
        target_keypoints_raw=raw_b,
        target_keypoints=kps_b,
        attention_maps=attention,
        mode=mode,
        refinement_skipped=skipped,
    )


def infer_pipeline(
    image_a: np.ndarray,
    source_pose: PoseSource,
    target_text: TextTarget,
    checkpoints: PipelineCheckpoints,
    noise_seed: int = 0,
    refine: bool = True,
    schema: Optional[AttributeSchema] = None,
) -> InferenceResult:
    """
    Render the person in `image_a` in the pose the target description asks for.

    A KeypointSet source pose selects partially text-guided inference; a
    description (record or embedding) selects fully text-guided inference,
    where the source keypoints are generated and refined too.

    Args:
        image_a: 3 x S x S source image in [-1, 1]
        source_pose: Source keypoints or source description
        target_text: Target description
        checkpoints: Loaded networks
        noise_seed: Seed for the stage-1 noise draws
        refine: Apply facial refinement (disable for the ablation)
        schema: Needed when descriptions are passed as records

    Returns:
        InferenceResult

    Raises:
        EmbeddingMismatchError: If a description does not match the stage-1 schema
        ShapeMismatchError: If the image or keypoint frame does not fit the renderer
    """
    target = _embed(target_text, schema, checkpoints)
    return infer_from_embedding(image_a, source_pose, target, checkpoints, noise_seed, refine, schema)


def interpolation_demo(
    image_a: np.ndarray,
    rec_start: TextTarget,
    rec_end: TextTarget,
    steps: int,
    checkpoints: PipelineCheckpoints,
    schema: Optional[AttributeSchema] = None,
    source_pose: Optional[PoseSource] = None,
    noise_seed: int = 0,
    refine: bool = True,
) -> List[InferenceResult]:
    """
    Sweep the target description linearly from `rec_start` to `rec_end`.

    Step i uses (1 - t) * v_start + t * v_end with t = i / (steps - 1) and the
    same noise throughout. The source pose defaults to `rec_start`.

    Raises:
        TipsValidationError: If steps < 2
    """
    if steps < 2:
        raise TipsValidationError(f"Interpolation needs at least 2 steps, got {steps}")
    v_start = _embed(rec_start, schema, checkpoints)
    v_end = _embed(rec_end, schema, checkpoints)
    source = source_pose if source_pose is not None else v_start
    results = []
    for i in range(steps):
        t = i / (steps - 1)
        v = lerp_embeddings(v_start, v_end, t)
        results.append(infer_from_embedding(image_a, source, v, checkpoints, noise_seed, refine, schema))
    logger.info(f"Interpolation demo rendered {steps} steps")
    return results
