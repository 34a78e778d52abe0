"""
Stage-2 service: facial refinement, its training loop and in-place application
"""
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from loguru import logger

from ...errors import TipsValidationError, TrainingDiagnosticError
from ...schemas import KeypointSet, RefinerConfig
from ...utils.seeding import seed_everything
from ...utils.trace import LossTrace, require_finite
from ..checkpoints.models import STAGE_REFINER, Checkpoint
from ..pose_core import (
    DegenerateFaceError,
    RefinementInapplicableError,
    denormalize_facial,
    normalize_facial,
    replace_facial,
)
from .models import FACE_VECTOR_DIM, RefineNet


REFINER_TRACE_COLUMNS = ("epoch", "mse")


class RefinementOutcome(NamedTuple):
    keypoints: KeypointSet
    skipped: bool


def refine(vec10: np.ndarray, net: RefineNet) -> np.ndarray:
    """
    Denoise one normalised facial vector.

    Raises:
        TipsValidationError: If the input is not 10 finite values
    """
    vec = np.asarray(vec10, dtype=np.float32).reshape(-1)
    if vec.shape[0] != FACE_VECTOR_DIM:
        raise TipsValidationError(f"Facial vector must have {FACE_VECTOR_DIM} values, got {vec.shape[0]}")
    if not np.all(np.isfinite(vec)):
        raise TipsValidationError("Facial vector contains non-finite values")
    was_training = net.training
    net.eval()
    with torch.no_grad():
        out = net(torch.from_numpy(vec).unsqueeze(0))[0].numpy()
    net.train(was_training)
    return out.astype(np.float64)


def apply_refinement(kps: KeypointSet, net: RefineNet) -> RefinementOutcome:
    """
    Replace the five facial joints with the refiner's prediction.

    Non-facial joints and every visibility flag are untouched. When a facial
    joint is occluded (or the face is degenerate) the input is returned as is
    with `skipped` set.
    """
    try:
        vec, params = normalize_facial(kps)
    except (RefinementInapplicableError, DegenerateFaceError) as e:
        logger.warning(f"Refinement skipped: {e}")
        return RefinementOutcome(kps, True)
    face = denormalize_facial(refine(vec, net), params)
    return RefinementOutcome(replace_facial(kps, face), False)


def facial_dataset(keypoint_sets: Sequence[KeypointSet]) -> np.ndarray:
    """
    Stack the normalised facial vectors of every set whose face is usable.

    Returns:
        (N, 10) float32 array
    """
    vectors: List[np.ndarray] = []
    skipped = 0
    for kps in keypoint_sets:
        try:
            vec, _ = normalize_facial(kps)
        except (RefinementInapplicableError, DegenerateFaceError):
            skipped += 1
            continue
        vectors.append(vec)
    if skipped:
        logger.info(f"Facial dataset: {skipped} of {len(keypoint_sets)} samples lack a usable face")
    if not vectors:
        return np.zeros((0, FACE_VECTOR_DIM), dtype=np.float32)
    return np.stack(vectors).astype(np.float32)


@dataclass
class RefinerTrainResult:
    checkpoint: Checkpoint
    trace: LossTrace
    net: RefineNet


def train_refiner(vectors: np.ndarray, cfg: RefinerConfig) -> RefinerTrainResult:
    """
    Fit the refiner to map perturbed facial vectors back to the clean ones.

    Every step adds i.i.d. Gaussian noise (`perturbation_sigma`, normalised
    units) to a batch of clean vectors and takes one SGD step on the MSE.

    Args:
        vectors: (N, 10) clean normalised facial vectors
        cfg: Refiner settings (seed must be resolved)

    Returns:
        RefinerTrainResult with one trace row (mean MSE) per epoch

    Raises:
        TipsValidationError: If the dataset is empty or misshapen
        TrainingDiagnosticError: If the MSE exceeds the divergence threshold
    """
    clean = torch.as_tensor(np.asarray(vectors, dtype=np.float32))
    if clean.dim() != 2 or clean.shape[1] != FACE_VECTOR_DIM:
        raise TipsValidationError(f"Facial dataset must be (N, {FACE_VECTOR_DIM}), got {tuple(clean.shape)}")
    if clean.shape[0] == 0:
        raise TipsValidationError("Facial dataset is empty")

    seed = cfg.seed if cfg.seed is not None else 0
    rng = seed_everything(seed)
    net = RefineNet(cfg)
    net.reset_parameters()
    net.train()
    opt = torch.optim.SGD(net.parameters(), lr=cfg.lr, momentum=cfg.momentum)

    n = clean.shape[0]
    trace = LossTrace(REFINER_TRACE_COLUMNS)
    logger.info(f"Refiner training: {n} faces, {cfg.epochs} epochs, sigma {cfg.perturbation_sigma}, seed {seed}")

    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(n, generator=rng)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            target = clean[order[start:start + cfg.batch_size]]
            noisy = target + cfg.perturbation_sigma * torch.randn(target.shape, generator=rng)
            loss = F.mse_loss(net(noisy), target)
            value = loss.item()
            require_finite("refiner MSE", [value], epoch)
            if value > cfg.divergence_threshold:
                logger.error(f"Refiner diverged at epoch {epoch}: MSE {value}")
                raise TrainingDiagnosticError(
                    f"Refiner MSE {value} exceeded {cfg.divergence_threshold} at epoch {epoch}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * target.shape[0]
        trace.append(epoch, total / n)

    checkpoint = Checkpoint.from_modules(
        STAGE_REFINER,
        {"refiner": net},
        config={"refiner": cfg.model_dump(mode="json")},
        iteration=cfg.epochs,
        metadata={"seed": seed, "samples": n},
    )
    logger.info(f"Refiner training done: final MSE {trace.rows[-1][1]:.6f}")
    return RefinerTrainResult(checkpoint=checkpoint, trace=trace, net=net)


def refiner_from_checkpoint(ckpt: Checkpoint) -> RefineNet:
    net = RefineNet(RefinerConfig.model_validate(ckpt.config["refiner"]))
    ckpt.load_into("refiner", net)
    return net.eval()
