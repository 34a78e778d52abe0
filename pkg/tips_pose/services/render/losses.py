"""
Stage-3 objectives: adversarial BCE, perceptual distance and their weighted sums
"""
from typing import Dict, Optional, Sequence, Union

import torch

from ...errors import ShapeMismatchError
from ...schemas import RenderTrainConfig
from .models import FeatureExtractor


BCE_EPS = 1e-7

Scalar = Union[float, torch.Tensor]


def bce(probs: torch.Tensor, target: float, eps: float = BCE_EPS) -> torch.Tensor:
    """Mean binary cross-entropy of a probability grid against a constant label"""
    p = probs.clamp(eps, 1.0 - eps)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def adv_loss_g(patch_probs: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """Generator adversarial loss: patch grid against the 'real' label"""
    return bce(patch_probs, 1.0, eps)


def discriminator_objective(real_probs: torch.Tensor, fake_probs: torch.Tensor, eps: float = BCE_EPS) -> torch.Tensor:
    """0.5 * (BCE(real, 1) + BCE(fake, 0))"""
    return 0.5 * (bce(real_probs, 1.0, eps) + bce(fake_probs, 0.0, eps))


def perceptual_terms(
    gen_img: torch.Tensor,
    target_img: torch.Tensor,
    extractor: Optional[FeatureExtractor],
    taps: Sequence[int] = (4, 9),
) -> Dict[int, torch.Tensor]:
    """
    Mean absolute feature difference at each tap.

    Target features carry no gradient. A missing extractor yields zeros.
    """
    if gen_img.shape != target_img.shape:
        raise ShapeMismatchError(f"Perceptual loss needs equal shapes, got {tuple(gen_img.shape)} and {tuple(target_img.shape)}")
    if extractor is None:
        zero = gen_img.new_zeros(())
        return {tap: zero for tap in taps}
    gen_feats = extractor(gen_img, taps)
    with torch.no_grad():
        target_feats = extractor(target_img, taps)
    return {tap: torch.mean(torch.abs(gen_feats[tap] - target_feats[tap])) for tap in taps}


def perceptual_loss(
    gen_img: torch.Tensor,
    target_img: torch.Tensor,
    extractor: Optional[FeatureExtractor],
    taps: Sequence[int] = (4, 9),
) -> torch.Tensor:
    """Sum over taps of the per-tap mean absolute feature difference"""
    terms = perceptual_terms(gen_img, target_img, extractor, taps)
    return sum(terms.values(), gen_img.new_zeros(()))


def generator_objective(l1: Scalar, adv: Scalar, perc4: Scalar, perc9: Scalar, cfg: RenderTrainConfig) -> Scalar:
    """lambda1 * l1 + lambda2 * adv + lambda3 * (perc4 + perc9)"""
    return cfg.lambda1 * l1 + cfg.lambda2 * adv + cfg.lambda3 * (perc4 + perc9)
