"""
Text-to-heatmap generator and heatmap critic
"""
import torch
import torch.nn as nn

from ...errors import ShapeMismatchError
from ...schemas import DTConfig, GTConfig


def init_weights(module: nn.Module, std: float = 0.02) -> None:
    """
    Initialise conv/linear weights from N(0, std) and norm scales from N(1, std).

    Biases start at zero. Apply with `model.apply(...)`.
    """
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, std)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, (nn.BatchNorm2d, nn.BatchNorm1d)):
        nn.init.normal_(module.weight, 1.0, std)
        nn.init.zeros_(module.bias)


class TextToPoseGenerator(nn.Module):
    """
    Maps (embedding, noise) to 18 x 64 x 64 heatmaps in (-1, 1).

    The embedding is projected to a latent code with leaky ReLU, concatenated
    with the noise vector, projected to a 4 x 4 seed and upsampled by four
    transposed-conv + batch-norm + ReLU blocks; a final 18-filter transposed
    conv with tanh produces the heatmaps.
    """

    def __init__(self, cfg: GTConfig):
        super().__init__()
        self.cfg = cfg
        self.project = nn.Sequential(
            nn.Linear(cfg.embed_dim, cfg.latent_dim),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        first = cfg.upconv_filters[0]
        self.seed = nn.Linear(cfg.latent_dim + cfg.noise_dim, first * cfg.seed_size * cfg.seed_size)

        blocks = []
        in_ch = first
        for out_ch in cfg.upconv_filters:
            blocks += [
                nn.ConvTranspose2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.BatchNorm2d(out_ch),
                nn.ReLU(),
            ]
            in_ch = out_ch
        self.upsample = nn.Sequential(*blocks)
        self.head = nn.Sequential(
            nn.ConvTranspose2d(in_ch, cfg.out_channels, kernel_size=3, stride=1, padding=1),
            nn.Tanh(),
        )

    def forward(self, v: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
        if v.dim() != 2 or v.shape[1] != self.cfg.embed_dim:
            raise ShapeMismatchError(f"Generator expects embeddings of shape (B, {self.cfg.embed_dim}), got {tuple(v.shape)}")
        if noise.dim() != 2 or noise.shape[1] != self.cfg.noise_dim or noise.shape[0] != v.shape[0]:
            raise ShapeMismatchError(f"Generator expects noise of shape ({v.shape[0]}, {self.cfg.noise_dim}), got {tuple(noise.shape)}")
        phi = self.project(v)
        x = self.seed(torch.cat([phi, noise], dim=1))
        x = x.view(-1, self.cfg.upconv_filters[0], self.cfg.seed_size, self.cfg.seed_size)
        return self.head(self.upsample(x))


class PoseCritic(nn.Module):
    """
    Wasserstein critic over (heatmaps, embedding) pairs.

    Four stride-2 convs with leaky ReLU take 64 x 64 heatmaps to a 4 x 4 map,
    which is concatenated with the projected embedding tiled 4 x 4, passed
    through a 1 x 1 conv and reduced to one unbounded score by a 4 x 4 conv.
    No normalisation layers (the gradient penalty is per-sample).
    """

    def __init__(self, cfg: DTConfig):
        super().__init__()
        self.cfg = cfg
        layers = []
        in_ch = 18
        for out_ch in cfg.conv_filters:
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
                nn.LeakyReLU(cfg.leaky_slope),
            ]
            in_ch = out_ch
        self.features = nn.Sequential(*layers)
        self.project = nn.Sequential(
            nn.Linear(cfg.embed_dim, cfg.latent_dim),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.point = nn.Sequential(
            nn.Conv2d(in_ch + cfg.latent_dim, cfg.point_conv_filters, kernel_size=1),
            nn.LeakyReLU(cfg.leaky_slope),
        )
        self.score = nn.Conv2d(cfg.point_conv_filters, 1, kernel_size=cfg.tile, bias=False)

    def penultimate(self, hm: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        """Features entering the final scoring conv"""
        size = self.cfg.in_size
        if hm.dim() != 4 or tuple(hm.shape[1:]) != (18, size, size):
            raise ShapeMismatchError(f"Critic expects heatmaps of shape (B, 18, {size}, {size}), got {tuple(hm.shape)}")
        if v.dim() != 2 or v.shape[1] != self.cfg.embed_dim or v.shape[0] != hm.shape[0]:
            raise ShapeMismatchError(f"Critic expects embeddings of shape ({hm.shape[0]}, {self.cfg.embed_dim}), got {tuple(v.shape)}")
        feat = self.features(hm)
        phi = self.project(v)
        tiled = phi[:, :, None, None].expand(-1, -1, self.cfg.tile, self.cfg.tile)
        return self.point(torch.cat([feat, tiled], dim=1))

    def forward(self, hm: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
        return self.score(self.penultimate(hm, v)).view(-1)
