"""
Evaluation metrics: SSIM, PCKh and gender consistency rate

External scorers (inception-style scores, LPIPS and the like) plug in through
the ExternalScorer protocol; none are bundled.
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Protocol, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from loguru import logger
from skimage.metrics import structural_similarity

from ..errors import EmptyBatchError, TipsValidationError
from ..schemas import GenderClassifierConfig, JOINT_INDEX, KeypointSet
from ..utils.seeding import seed_everything
from .checkpoints.models import STAGE_GENDER, Checkpoint
from .text2pose.models import init_weights


LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
DECISION_THRESHOLD = 0.5


class UndefinedMetricError(TipsValidationError):
    """Raised when a metric has no meaningful value for its inputs"""
    pass


# ============================================================================
# SSIM
# ============================================================================

def to_luma(image: np.ndarray) -> np.ndarray:
    """
    Grayscale version of an H x W, H x W x 3 or 3 x H x W image.

    Values keep their original scale; the result is float64.
    """
    arr = np.asarray(image)
    if arr.ndim == 2:
        return arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[2] == 3:
        return arr.astype(np.float64) @ LUMA_WEIGHTS
    if arr.ndim == 3 and arr.shape[0] == 3:
        return np.tensordot(LUMA_WEIGHTS, arr.astype(np.float64), axes=1)
    raise TipsValidationError(f"Cannot convert an image of shape {arr.shape} to luma")


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    window: int = SSIM_WINDOW,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: Optional[float] = None,
) -> float:
    """
    Mean structural similarity over 11 x 11 Gaussian windows (sigma 1.5) on luma.

    Args:
        a: First image (grayscale or RGB, HWC or CHW)
        b: Second image, same shape
        window: Window side; must not exceed either image side
        k1: Luminance stabiliser
        k2: Contrast stabiliser
        data_range: Dynamic range (255 for uint8, 2.0 for [-1, 1] floats by default)

    Returns:
        SSIM in [-1, 1]

    Raises:
        TipsValidationError: If the shapes differ
        UndefinedMetricError: If the image is smaller than the window
    """
    if np.shape(a) != np.shape(b):
        raise TipsValidationError(f"SSIM needs equal shapes, got {np.shape(a)} and {np.shape(b)}")
    if data_range is None:
        data_range = 255.0 if np.asarray(a).dtype == np.uint8 else 2.0
    ga = to_luma(a)
    gb = to_luma(b)
    if min(ga.shape) < window:
        raise UndefinedMetricError(f"Image of {ga.shape[0]}x{ga.shape[1]} is smaller than the {window}x{window} SSIM window")
    sigma = SSIM_SIGMA * window / SSIM_WINDOW
    return float(structural_similarity(
        ga,
        gb,
        gaussian_weights=True,
        sigma=sigma,
        use_sample_covariance=False,
        data_range=data_range,
        K1=k1,
        K2=k2,
    ))


# ============================================================================
# PCKh
# ============================================================================

def head_size(gt: KeypointSet) -> float:
    """
    Nose-to-neck distance of the ground truth.

    Raises:
        UndefinedMetricError: If nose or neck is missing or they coincide
    """
    nose = gt.joints[JOINT_INDEX["nose"]]
    neck = gt.joints[JOINT_INDEX["neck"]]
    if not (nose.visible and neck.visible):
        raise UndefinedMetricError("PCKh needs a visible ground-truth nose and neck")
    size = float(np.hypot(nose.x - neck.x, nose.y - neck.y))
    if size == 0.0:
        raise UndefinedMetricError("Ground-truth nose and neck coincide; head size is zero")
    return size


def pckh(pred: KeypointSet, gt: KeypointSet, alpha: float = 0.5) -> float:
    """
    Fraction of jointly visible joints within alpha * head size of the ground truth.

    Returns 0.0 (with a warning) when no joint is visible in both sets.

    Raises:
        TipsValidationError: If the two sets are in different frames
        UndefinedMetricError: If the head size is undefined
    """
    if (pred.image_width, pred.image_height) != (gt.image_width, gt.image_height):
        raise TipsValidationError(
            f"PCKh frames differ: {pred.image_width}x{pred.image_height} vs {gt.image_width}x{gt.image_height}"
        )
    threshold = alpha * head_size(gt)
    both = pred.visibility() & gt.visibility()
    if not both.any():
        logger.warning("PCKh: no joint is visible in both prediction and ground truth")
        return 0.0
    dist = np.linalg.norm(pred.xy()[both] - gt.xy()[both], axis=1)
    return float(np.mean(dist <= threshold))


# ============================================================================
# GENDER CONSISTENCY
# ============================================================================

class GenderClassifier(Protocol):
    """Probability that an H x W x 3 uint8 image shows a woman (label 1)"""

    def predict_proba(self, image: np.ndarray) -> float:
        ...


class TagOracleClassifier:
    """Reads the gender tag the synthetic renderer writes into the top-left block"""

    def __init__(self, block: int = 2):
        self.block = block

    def predict_proba(self, image: np.ndarray) -> float:
        tag = np.asarray(image)[:self.block, :self.block]
        return 1.0 if float(tag.mean()) > 127.5 else 0.0


class ToyGenderClassifier(nn.Module):
    """Two strided convs, global pooling and a single sigmoid unit"""

    def __init__(self, width: int = 16):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, width // 2, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(width // 2, width, kernel_size=4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
        )
        self.head = nn.Linear(width, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.head(self.features(x).flatten(1))).view(-1)

    def predict_proba(self, image: np.ndarray) -> float:
        was_training = self.training
        self.eval()
        with torch.no_grad():
            p = self(_to_tensor([image]))
        self.train(was_training)
        return float(p[0])


def _to_tensor(images: Sequence[np.ndarray]) -> torch.Tensor:
    arr = np.stack([np.asarray(img, dtype=np.float32) for img in images])
    return torch.from_numpy(arr / 127.5 - 1.0).permute(0, 3, 1, 2).contiguous()


@dataclass
class GenderTrainResult:
    checkpoint: Checkpoint
    classifier: ToyGenderClassifier
    losses: List[float]


def train_gender_classifier(
    images: Sequence[np.ndarray],
    labels: Sequence[int],
    cfg: GenderClassifierConfig,
) -> GenderTrainResult:
    """
    Fit the toy classifier with Adam on binary cross-entropy.

    Raises:
        EmptyBatchError: If there are no images
        TipsValidationError: If images and labels differ in number
    """
    if not images:
        raise EmptyBatchError("Gender classifier needs at least one image")
    if len(images) != len(labels):
        raise TipsValidationError(f"{len(images)} images but {len(labels)} labels")
    seed = cfg.seed if cfg.seed is not None else 0
    rng = seed_everything(seed)
    clf = ToyGenderClassifier()
    clf.apply(init_weights)
    opt = torch.optim.Adam(clf.parameters(), lr=cfg.lr)
    x_all = _to_tensor(images)
    y_all = torch.tensor([float(l) for l in labels])
    n = len(images)
    losses: List[float] = []
    for epoch in range(1, cfg.epochs + 1):
        order = torch.randperm(n, generator=rng)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = F.binary_cross_entropy(clf(x_all[idx]).clamp(1e-7, 1 - 1e-7), y_all[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        losses.append(total / n)
        logger.debug(f"gender classifier epoch {epoch}: BCE {losses[-1]:.4f}")
    checkpoint = Checkpoint.from_modules(
        STAGE_GENDER,
        {"classifier": clf},
        config={"gender": cfg.model_dump(mode="json")},
        iteration=cfg.epochs,
        metadata={"seed": seed, "samples": n},
    )
    return GenderTrainResult(checkpoint=checkpoint, classifier=clf.eval(), losses=losses)


def gender_classifier_from_checkpoint(ckpt: Checkpoint) -> ToyGenderClassifier:
    clf = ToyGenderClassifier()
    ckpt.load_into("classifier", clf)
    return clf.eval()


def gcr(
    generated_images: Sequence[np.ndarray],
    source_gender_labels: Sequence[int],
    clf: GenderClassifier,
) -> float:
    """
    Share of generated images classified as the gender of their source image.

    Raises:
        EmptyBatchError: If the batch is empty
        TipsValidationError: If images and labels differ in number
    """
    if len(generated_images) == 0:
        raise EmptyBatchError("GCR needs at least one image")
    if len(generated_images) != len(source_gender_labels):
        raise TipsValidationError(f"{len(generated_images)} images but {len(source_gender_labels)} labels")
    decisions = [int(clf.predict_proba(img) >= DECISION_THRESHOLD) for img in generated_images]
    return float(np.mean([d == int(l) for d, l in zip(decisions, source_gender_labels)]))


# ============================================================================
# EXTERNAL SCORERS
# ============================================================================

class ExternalScorer(Protocol):
    """Batch-level score computed outside this package"""
    name: str
    deterministic: bool

    def __call__(self, images: Sequence[np.ndarray]) -> float:
        ...


def run_external_scorers(images: Sequence[np.ndarray], scorers: Sequence[ExternalScorer]) -> Dict[str, float]:
    scores: Dict[str, float] = {}
    for scorer in scorers:
        scores[scorer.name] = float(scorer(images))
        if not scorer.deterministic:
            logger.info(f"Scorer {scorer.name} is not deterministic; its value will vary between runs")
    return scores
