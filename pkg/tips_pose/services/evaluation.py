"""
Evaluation battery over generated/target pairs
"""
from typing import List, Optional, Sequence

import numpy as np
from loguru import logger

from ..errors import EmptyBatchError, TipsValidationError
from ..schemas import KeypointSet
from ..utils.imaging import from_model_range
from ..utils.report import ReportRow
from .metrics import ExternalScorer, GenderClassifier, UndefinedMetricError, gcr, pckh, run_external_scorers, ssim
from .render.inference import PipelineCheckpoints, infer_pipeline
from .synth_data import PoseSample, model_image
from .text_encode import AttributeSchema


# (label, mode, refine)
ABLATION_VARIANTS = (
    ("Ours (partial)", "partial", True),
    ("Ours (full)", "full", True),
    ("Ours (partial, no refine)", "partial", False),
    ("Ours (full, no refine)", "full", False),
)


def gender_label(sample: PoseSample) -> int:
    """1 for woman, 0 for man"""
    return 1 if sample.record.selections.get("gender") == "woman" else 0


def evaluate_variant(
    variant: str,
    generated: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    predicted_keypoints: Sequence[KeypointSet],
    target_keypoints: Sequence[Optional[KeypointSet]],
    source_labels: Sequence[int],
    classifier: GenderClassifier,
    scorers: Sequence[ExternalScorer] = (),
) -> ReportRow:
    """
    Score one variant: mean SSIM and PCKh over pairs, GCR over the batch.

    Images are H x W x 3 uint8. Pairs without target keypoints (or with an
    undefined head size) are left out of the PCKh mean.

    Raises:
        EmptyBatchError: If there are no pairs
    """
    if not generated:
        raise EmptyBatchError(f"No samples to evaluate for {variant}")
    ssim_mean = float(np.mean([ssim(g, t) for g, t in zip(generated, targets)]))

    scores: List[float] = []
    for pred, gt in zip(predicted_keypoints, target_keypoints):
        if gt is None:
            continue
        try:
            scores.append(pckh(pred, gt))
        except UndefinedMetricError as e:
            logger.debug(f"{variant}: PCKh skipped for one pair ({e})")
    pckh_mean = float(np.mean(scores)) if scores else None

    return ReportRow(
        variant=variant,
        ssim=ssim_mean,
        pckh=pckh_mean,
        gcr=gcr(generated, source_labels, classifier),
        n=len(generated),
        extra=run_external_scorers(generated, scorers),
    )


def evaluate(
    pairs: Sequence[tuple],
    classifier: GenderClassifier,
    checkpoints: Optional[PipelineCheckpoints] = None,
    schema: Optional[AttributeSchema] = None,
    noise_seed: int = 0,
    scorers: Sequence[ExternalScorer] = (),
    variants: Sequence[tuple] = ABLATION_VARIANTS,
) -> List[ReportRow]:
    """
    Build the report rows for a list of (source, target) sample pairs.

    The first row compares the targets with themselves; one row per variant
    follows when checkpoints are supplied.

    Raises:
        TipsValidationError: If a partially text-guided variant meets a source without keypoints
    """
    targets = [b.image for _, b in pairs]
    gt_kps = [b.keypoints for _, b in pairs]
    labels = [gender_label(a) for a, _ in pairs]
    rows = [evaluate_variant(
        "Real Data", targets, targets,
        list(gt_kps), gt_kps, [gender_label(b) for _, b in pairs], classifier, scorers,
    )]
    if checkpoints is None:
        return rows

    for label, mode, refine in variants:
        generated: List[np.ndarray] = []
        predicted: List[KeypointSet] = []
        for a, b in pairs:
            if mode == "partial" and a.keypoints is None:
                raise TipsValidationError(f"Sample '{a.sample_id}' has no keypoints; {label} needs source keypoints")
            source = a.keypoints if mode == "partial" else a.record
            result = infer_pipeline(
                model_image(a), source, b.record, checkpoints,
                noise_seed=noise_seed, refine=refine, schema=schema,
            )
            generated.append(from_model_range(result.image))
            predicted.append(result.target_keypoints)
        rows.append(evaluate_variant(label, generated, targets, predicted, gt_kps, labels, classifier, scorers))
        logger.info(f"Evaluated {label} on {len(pairs)} pairs")
    return rows
