"""
Stage-1 service: text-to-heatmap inference helpers and the WGAN-GP trainer
"""
from dataclasses import dataclass
from functools import partial
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from loguru import logger

from ...errors import ShapeMismatchError, TipsValidationError
from ...schemas import DTConfig, GTConfig, HeatmapSpec, KeypointSet, T2PTrainConfig
from ...utils.seeding import batch_indices, seed_everything
from ...utils.trace import LossTrace, require_finite
from ..checkpoints.models import STAGE_T2P, Checkpoint
from ..pose_core import DEFAULT_THRESHOLD, HeatmapTensor, extract_keypoints, render_heatmaps
from ..text_encode import TextEmbedding
from .losses import critic_loss, critic_objective, gradient_penalty, generator_loss
from .models import PoseCritic, TextToPoseGenerator, init_weights


T2P_TRACE_COLUMNS = ("iteration", "critic_loss", "gp", "gen_loss")

ArrayLike = Union[np.ndarray, torch.Tensor]


def _as_batch(values: ArrayLike, width: int, what: str) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(values, dtype=np.float32)).reshape(1, -1)
    if tensor.shape[1] != width:
        raise ShapeMismatchError(f"{what} has length {tensor.shape[1]}, expected {width}")
    return tensor


def gt_forward(v: TextEmbedding, noise: ArrayLike, gen: TextToPoseGenerator) -> np.ndarray:
    """
    Run the generator on one embedding in inference mode.

    Returns:
        18 x 64 x 64 float32 array in (-1, 1)
    """
    was_training = gen.training
    gen.eval()
    with torch.no_grad():
        out = gen(_as_batch(v.values, gen.cfg.embed_dim, "Embedding"), _as_batch(noise, gen.cfg.noise_dim, "Noise"))
    gen.train(was_training)
    return out[0].numpy()


def dt_forward(hm: ArrayLike, v: TextEmbedding, critic: PoseCritic) -> float:
    """Score one (critic-range heatmap, embedding) pair"""
    hm_t = torch.as_tensor(np.asarray(hm, dtype=np.float32))
    if hm_t.dim() == 3:
        hm_t = hm_t.unsqueeze(0)
    with torch.no_grad():
        return float(critic(hm_t, _as_batch(v.values, critic.cfg.embed_dim, "Embedding"))[0])


def draw_noise(generator: torch.Generator, dim: int = 128) -> torch.Tensor:
    """One (1, dim) standard-normal noise vector from a seeded generator"""
    return torch.randn(1, dim, generator=generator)


def generate_keypoints(
    v: TextEmbedding,
    gen: TextToPoseGenerator,
    noise: Optional[torch.Tensor] = None,
    noise_seed: int = 0,
    image_width: Optional[int] = None,
    image_height: Optional[int] = None,
    threshold: float = DEFAULT_THRESHOLD,
) -> Tuple[KeypointSet, HeatmapTensor]:
    """
    Generate heatmaps for a description and read keypoints out of them.

    Args:
        v: Description embedding
        gen: Trained generator
        noise: Explicit noise vector; drawn from `noise_seed` when omitted
        noise_seed: Seed for the noise draw
        image_width: Frame the keypoints are returned in (heatmap width by default)
        image_height: Frame the keypoints are returned in (heatmap height by default)
        threshold: Occlusion floor

    Returns:
        Tuple of (keypoints, heatmaps in [0, 1])
    """
    if noise is None:
        noise = draw_noise(torch.Generator().manual_seed(noise_seed), gen.cfg.noise_dim)
    hm = HeatmapTensor.from_generator_output(gt_forward(v, noise, gen))
    kps = extract_keypoints(hm, threshold=threshold, image_width=image_width, image_height=image_height)
    return kps, hm


class HeatmapEmbeddingDataset:
    """
    (heatmap, embedding) pairs for stage-1 training.

    Heatmaps are rendered from keypoints on demand and returned in the critic's
    [-1, 1] range; a bounded cache keeps small datasets from re-rendering.
    """

    def __init__(
        self,
        keypoints: Sequence[KeypointSet],
        embeddings: Sequence[TextEmbedding],
        spec: Optional[HeatmapSpec] = None,
        max_cached: int = 256,
    ):
        if len(keypoints) != len(embeddings):
            raise TipsValidationError(f"{len(keypoints)} keypoint sets but {len(embeddings)} embeddings")
        if not keypoints:
            raise TipsValidationError("Stage-1 dataset is empty")
        dims = {e.dim for e in embeddings}
        if len(dims) != 1:
            raise TipsValidationError(f"Embeddings have mixed lengths {sorted(dims)}")
        self.keypoints = list(keypoints)
        self.embeddings = np.stack([e.values for e in embeddings]).astype(np.float32)
        self.schema_id = embeddings[0].schema_id
        self.spec = spec or HeatmapSpec()
        self.max_cached = max_cached
        self._cache: Dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.keypoints)

    @property
    def embed_dim(self) -> int:
        return int(self.embeddings.shape[1])

    def heatmap(self, i: int) -> np.ndarray:
        """Critic-range heatmaps of sample i"""
        if i in self._cache:
            return self._cache[i]
        hm = render_heatmaps(self.keypoints[i], self.spec).to_critic_range().astype(np.float32)
        if len(self._cache) < self.max_cached:
            self._cache[i] = hm
        return hm

    def batch(self, indices: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        idx = [int(i) for i in indices]
        hm = torch.from_numpy(np.stack([self.heatmap(i) for i in idx]))
        v = torch.from_numpy(self.embeddings[idx])
        return hm, v


@dataclass
class T2PTrainResult:
    """Outcome of a stage-1 training run"""
    checkpoint: Checkpoint
    trace: LossTrace
    generator: TextToPoseGenerator
    critic: PoseCritic
    critic_updates: int
    generator_updates: int


def _adam(params, cfg: T2PTrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        params,
        lr=cfg.lr,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )


def train_t2p(
    dataset: HeatmapEmbeddingDataset,
    cfg: T2PTrainConfig,
    gen_cfg: Optional[GTConfig] = None,
    critic_cfg: Optional[DTConfig] = None,
) -> T2PTrainResult:
    """
    Train generator and critic with the gradient-penalised Wasserstein objective.

    Each iteration runs `critic_steps_per_gen` critic updates followed by one
    generator update and appends one trace row with the last critic step's
    loss and penalty and the generator loss.

    Args:
        dataset: Stage-1 pairs
        cfg: Optimisation settings (seed must be resolved)
        gen_cfg: Generator architecture (embed_dim follows the dataset by default)
        critic_cfg: Critic architecture (embed_dim follows the dataset by default)

    Returns:
        T2PTrainResult with the checkpoint, trace and trained networks

    Raises:
        TrainingDiagnosticError: If any loss becomes non-finite
    """
    seed = cfg.seed if cfg.seed is not None else 0
    gen_cfg = gen_cfg or GTConfig(embed_dim=dataset.embed_dim)
    critic_cfg = critic_cfg or DTConfig(embed_dim=dataset.embed_dim)
    if gen_cfg.embed_dim != dataset.embed_dim or critic_cfg.embed_dim != dataset.embed_dim:
        raise ShapeMismatchError(
            f"Network embed_dim ({gen_cfg.embed_dim}/{critic_cfg.embed_dim}) does not match dataset ({dataset.embed_dim})"
        )

    rng = seed_everything(seed)
    gen = TextToPoseGenerator(gen_cfg)
    critic = PoseCritic(critic_cfg)
    gen.apply(partial(init_weights, std=cfg.init_std))
    critic.apply(partial(init_weights, std=cfg.init_std))
    gen.train()
    critic.train()
    opt_g = _adam(gen.parameters(), cfg)
    opt_d = _adam(critic.parameters(), cfg)

    n = len(dataset)
    bs = cfg.batch_size
    trace = LossTrace(T2P_TRACE_COLUMNS)
    critic_updates = 0
    generator_updates = 0
    logger.info(
        f"Stage-1 training: {n} samples, {cfg.iterations} iterations, "
        f"{cfg.critic_steps_per_gen} critic steps per generator step, seed {seed}"
    )

    for iteration in range(1, cfg.iterations + 1):
        for _ in range(cfg.critic_steps_per_gen):
            real, v = dataset.batch(batch_indices(n, bs, rng))
            noise = torch.randn(bs, gen_cfg.noise_dim, generator=rng)
            with torch.no_grad():
                fake = gen(v, noise)
            alpha = torch.rand(bs, generator=rng)

            l_d = critic_loss(critic(real, v), critic(fake, v))
            gp = gradient_penalty(critic, real, fake, v, alpha)
            loss_d = critic_objective(l_d, gp, cfg.gp_lambda)
            require_finite("critic objective", [loss_d.item()], iteration)

            opt_d.zero_grad()
            loss_d.backward()
            opt_d.step()
            critic_updates += 1

        _, v = dataset.batch(batch_indices(n, bs, rng))
        v1 = torch.from_numpy(dataset.embeddings[torch.randint(n, (bs,), generator=rng).numpy()])
        v2 = torch.from_numpy(dataset.embeddings[torch.randint(n, (bs,), generator=rng).numpy()])
        noise = torch.randn(bs, gen_cfg.noise_dim, generator=rng)
        loss_g = generator_loss(critic, gen, noise, v, (v1, v2))
        require_finite("generator loss", [loss_g.item()], iteration)

        opt_g.zero_grad()
        loss_g.backward()
        opt_g.step()
        generator_updates += 1

        trace.append(iteration, l_d.item(), gp.item(), loss_g.item())
        if iteration % 100 == 0 or iteration == cfg.iterations:
            logger.debug(f"t2p iter {iteration}: critic {l_d.item():.4f} gp {gp.item():.4f} gen {loss_g.item():.4f}")

    checkpoint = Checkpoint.from_modules(
        STAGE_T2P,
        {"generator": gen, "critic": critic},
        config={
            "generator": gen_cfg.model_dump(mode="json"),
            "critic": critic_cfg.model_dump(mode="json"),
            "train": cfg.model_dump(mode="json"),
        },
        iteration=generator_updates,
        metadata={
            "seed": seed,
            "schema_id": dataset.schema_id,
            "critic_updates": critic_updates,
            "generator_updates": generator_updates,
        },
    )
    logger.info(f"Stage-1 training done: {critic_updates} critic / {generator_updates} generator updates")
    return T2PTrainResult(
        checkpoint=checkpoint,
        trace=trace,
        generator=gen,
        critic=critic,
        critic_updates=critic_updates,
        generator_updates=generator_updates,
    )


def generator_from_checkpoint(ckpt: Checkpoint) -> TextToPoseGenerator:
    """Rebuild the stage-1 generator described by a checkpoint's config echo"""
    gen = TextToPoseGenerator(GTConfig.model_validate(ckpt.config["generator"]))
    ckpt.load_into("generator", gen)
    return gen.eval()


def critic_from_checkpoint(ckpt: Checkpoint) -> PoseCritic:
    critic = PoseCritic(DTConfig.model_validate(ckpt.config["critic"]))
    ckpt.load_into("critic", critic)
    return critic.eval()
