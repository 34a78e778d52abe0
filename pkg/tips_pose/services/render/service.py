"""
Stage-3 service: pair dataset and the alternating discriminator/generator trainer
"""
from dataclasses import dataclass
from functools import partial
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch
from loguru import logger

from ...errors import ShapeMismatchError, TipsValidationError
from ...schemas import DSConfig, GSConfig, KeypointSet, RenderTrainConfig
from ...utils.seeding import batch_indices, seed_everything
from ...utils.trace import LossTrace, require_finite
from ..checkpoints.models import STAGE_RENDER, Checkpoint
from ..pose_core import image_heatmap_spec, render_heatmaps
from ..text2pose.models import init_weights
from .losses import adv_loss_g, discriminator_objective, generator_objective, perceptual_terms
from .models import FeatureExtractor, PatchDiscriminator, PoseRenderGenerator


@dataclass(frozen=True)
class RenderPair:
    """Two renders of one identity: source image/pose and target image/pose"""
    image_a: np.ndarray
    kps_a: KeypointSet
    image_b: np.ndarray
    kps_b: KeypointSet


class RenderPairDataset:
    """
    Stage-3 training pairs.

    Images are float32 3 x S x S arrays in [-1, 1]; heatmaps are rendered at
    image resolution when a batch is drawn.
    """

    def __init__(self, pairs: Sequence[RenderPair], heatmap_sigma: float = 1.5):
        if not pairs:
            raise TipsValidationError("Stage-3 dataset is empty")
        sizes = {p.image_a.shape for p in pairs} | {p.image_b.shape for p in pairs}
        if len(sizes) != 1:
            raise ShapeMismatchError(f"Pair images have mixed shapes {sorted(sizes)}")
        shape = sizes.pop()
        if len(shape) != 3 or shape[0] != 3 or shape[1] != shape[2]:
            raise ShapeMismatchError(f"Pair images must be 3 x S x S, got {shape}")
        self.pairs = list(pairs)
        self.size = int(shape[1])
        self.spec = image_heatmap_spec(self.size, heatmap_sigma)

    def __len__(self) -> int:
        return len(self.pairs)

    def heatmaps(self, kps: KeypointSet) -> np.ndarray:
        return render_heatmaps(kps, self.spec).values

    def batch(self, indices: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """(I_A, H_A, I_B, H_B) tensors"""
        items = [self.pairs[int(i)] for i in indices]
        image_a = torch.from_numpy(np.stack([p.image_a for p in items]).astype(np.float32))
        hm_a = torch.from_numpy(np.stack([self.heatmaps(p.kps_a) for p in items]))
        image_b = torch.from_numpy(np.stack([p.image_b for p in items]).astype(np.float32))
        hm_b = torch.from_numpy(np.stack([self.heatmaps(p.kps_b) for p in items]))
        return image_a, hm_a, image_b, hm_b


@dataclass
class RenderTrainResult:
    checkpoint: Checkpoint
    trace: LossTrace
    generator: PoseRenderGenerator
    discriminator: PatchDiscriminator


def render_trace_columns(taps: Sequence[int]) -> Tuple[str, ...]:
    return ("iteration", "d_loss", "g_loss", "l1", "adv") + tuple(f"perc{t}" for t in taps)


def _adam(params, cfg: RenderTrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        params,
        lr=cfg.lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )


def train_render(
    dataset: RenderPairDataset,
    cfg: RenderTrainConfig,
    extractor: Optional[FeatureExtractor] = None,
    gs_cfg: Optional[GSConfig] = None,
    ds_cfg: Optional[DSConfig] = None,
) -> RenderTrainResult:
    """
    Train the renderer and patch discriminator, one update of each per batch.

    The discriminator step sees the generated image detached; the generator
    step is scored by the freshly updated discriminator.

    Args:
        dataset: Same-identity pairs
        cfg: Optimisation settings (seed must be resolved)
        extractor: Frozen perceptual feature extractor; None drops the perceptual terms
        gs_cfg: Renderer architecture (image_size follows the dataset by default)
        ds_cfg: Discriminator architecture

    Returns:
        RenderTrainResult with checkpoint, per-iteration component losses and networks

    Raises:
        TrainingDiagnosticError: If a loss becomes non-finite
    """
    seed = cfg.seed if cfg.seed is not None else 0
    gs_cfg = gs_cfg or GSConfig(image_size=dataset.size)
    ds_cfg = ds_cfg or DSConfig()
    if gs_cfg.image_size != dataset.size:
        raise ShapeMismatchError(f"Renderer image_size {gs_cfg.image_size} does not match dataset images ({dataset.size})")

    rng = seed_everything(seed)
    gen = PoseRenderGenerator(gs_cfg)
    gen.apply(partial(init_weights, std=cfg.init_std))
    disc = PatchDiscriminator(ds_cfg)
    disc.apply(partial(init_weights, std=cfg.init_std))
    gen.train()
    disc.train()
    opt_g = _adam(gen.parameters(), cfg)
    opt_d = _adam(disc.parameters(), cfg)

    taps = list(cfg.perceptual_taps)
    trace = LossTrace(render_trace_columns(taps))
    n = len(dataset)
    logger.info(
        f"Stage-3 training: {n} pairs at {dataset.size}x{dataset.size}, {cfg.iterations} iterations, "
        f"attention={gs_cfg.attention}, perceptual={'on' if extractor is not None else 'off'}, seed {seed}"
    )

    for iteration in range(1, cfg.iterations + 1):
        image_a, hm_a, image_b, hm_b = dataset.batch(batch_indices(n, cfg.batch_size, rng))
        fake, _ = gen(image_a, hm_a, hm_b)

        loss_d = discriminator_objective(disc(image_a, image_b), disc(image_a, fake.detach()), cfg.bce_eps)
        require_finite("discriminator objective", [loss_d.item()], iteration)
        opt_d.zero_grad()
        loss_d.backward()
        opt_d.step()

        adv = adv_loss_g(disc(image_a, fake), cfg.bce_eps)
        l1 = torch.mean(torch.abs(fake - image_b))
        perc = perceptual_terms(fake, image_b, extractor, taps)
        loss_g = generator_objective(l1, adv, perc[taps[0]], perc[taps[1]], cfg)
        require_finite("generator objective", [loss_g.item()], iteration)
        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()

        trace.append(
            iteration, loss_d.item(), loss_g.item(), l1.item(), adv.item(),
            *[float(perc[t]) for t in taps],
        )
        if iteration % 50 == 0 or iteration == cfg.iterations:
            logger.debug(f"render iter {iteration}: D {loss_d.item():.4f} G {loss_g.item():.4f} L1 {l1.item():.4f}")

    checkpoint = Checkpoint.from_modules(
        STAGE_RENDER,
        {"generator": gen, "discriminator": disc},
        config={
            "generator": gs_cfg.model_dump(mode="json"),
            "discriminator": ds_cfg.model_dump(mode="json"),
            "train": cfg.model_dump(mode="json"),
        },
        iteration=cfg.iterations,
        metadata={"seed": seed, "pairs": n, "perceptual": extractor is not None},
    )
    logger.info(f"Stage-3 training done: final L1 {trace.rows[-1][3]:.4f}")
    return RenderTrainResult(checkpoint=checkpoint, trace=trace, generator=gen, discriminator=disc)


def renderer_from_checkpoint(ckpt: Checkpoint) -> PoseRenderGenerator:
    gen = PoseRenderGenerator(GSConfig.model_validate(ckpt.config["generator"]))
    ckpt.load_into("generator", gen)
    return gen.eval()


def render_image(
    gen: PoseRenderGenerator,
    image_a: np.ndarray,
    hm_a: np.ndarray,
    hm_b: np.ndarray,
) -> Tuple[np.ndarray, Dict[int, np.ndarray]]:
    """Single-sample inference: (3 x S x S image, {level: attention map})"""
    was_training = gen.training
    gen.eval()
    with torch.no_grad():
        out, attention = gen(
            torch.from_numpy(np.asarray(image_a, dtype=np.float32))[None],
            torch.from_numpy(np.asarray(hm_a, dtype=np.float32))[None],
            torch.from_numpy(np.asarray(hm_b, dtype=np.float32))[None],
        )
    gen.train(was_training)
    return out[0].numpy(), {level: a[0].numpy() for level, a in attention.items()}
