"""
WGAN-GP objectives for the text-to-heatmap stage
"""
from typing import Callable, Tuple

import torch

from ...errors import EmptyBatchError, TipsValidationError, TrainingDiagnosticError


Critic = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]
Generator = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


def critic_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """
    Wasserstein critic loss -mean(D(real) - D(fake)).

    Raises:
        EmptyBatchError: If the batch is empty
        TipsValidationError: If batch sizes differ
    """
    if real_scores.numel() == 0:
        raise EmptyBatchError("critic_loss needs at least one score")
    if real_scores.shape != fake_scores.shape:
        raise TipsValidationError(f"Score batches differ: {tuple(real_scores.shape)} vs {tuple(fake_scores.shape)}")
    return -torch.mean(real_scores - fake_scores)


def interpolate_samples(real: torch.Tensor, fake: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """alpha * real + (1 - alpha) * fake with one alpha per batch element"""
    a = alpha.view(-1, *([1] * (real.dim() - 1))).to(real.dtype)
    return a * real + (1.0 - a) * fake


def gradient_penalty(
    critic: Critic,
    real_hm: torch.Tensor,
    fake_hm: torch.Tensor,
    v: torch.Tensor,
    alpha: torch.Tensor,
) -> torch.Tensor:
    """
    Mean squared deviation of the critic's input-gradient norm from 1.

    The gradient is taken jointly over the interpolated heatmap and the
    embedding, and the graph is kept so the penalty can be backpropagated.

    Args:
        critic: Callable scoring (heatmaps, embeddings)
        real_hm: Real heatmaps in critic range
        fake_hm: Generated heatmaps
        v: Conditioning embeddings
        alpha: One uniform[0, 1] sample per batch element

    Returns:
        Scalar penalty

    Raises:
        TrainingDiagnosticError: If the gradients are not finite
    """
    if real_hm.shape != fake_hm.shape:
        raise TipsValidationError(f"Real/fake heatmaps differ: {tuple(real_hm.shape)} vs {tuple(fake_hm.shape)}")
    x_hat = interpolate_samples(real_hm, fake_hm, alpha).detach().requires_grad_(True)
    v_hat = v.detach().requires_grad_(True)
    scores = critic(x_hat, v_hat)
    grad_x, grad_v = torch.autograd.grad(
        outputs=scores,
        inputs=(x_hat, v_hat),
        grad_outputs=torch.ones_like(scores),
        create_graph=True,
    )
    batch = real_hm.shape[0]
    flat = torch.cat([grad_x.reshape(batch, -1), grad_v.reshape(batch, -1)], dim=1)
    if not torch.isfinite(flat).all():
        raise TrainingDiagnosticError("Non-finite critic gradients in gradient penalty")
    norm = flat.norm(2, dim=1)
    return torch.mean((norm - 1.0) ** 2)


def critic_objective(l_d: torch.Tensor, gp: torch.Tensor, gp_lambda: float = 10.0) -> torch.Tensor:
    """Critic loss plus the weighted gradient penalty"""
    return l_d + gp_lambda * gp


def generator_loss(
    critic: Critic,
    gen: Generator,
    noise_batch: torch.Tensor,
    v_batch: torch.Tensor,
    v_pair_batch: Tuple[torch.Tensor, torch.Tensor],
) -> torch.Tensor:
    """
    Generator loss over real and interpolated text encodings.

    -mean D(G(noise, v), v) - mean D(G(noise, v_mid), v_mid) where v_mid is
    the midpoint of a pair of training embeddings.
    """
    v1, v2 = v_pair_batch
    v_mid = (v1 + v2) / 2.0
    term_real = torch.mean(critic(gen(v_batch, noise_batch), v_batch))
    term_mid = torch.mean(critic(gen(v_mid, noise_batch), v_mid))
    return -term_real - term_mid
