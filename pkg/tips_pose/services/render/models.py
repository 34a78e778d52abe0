"""
Attention-gated rendering generator, patch discriminator and feature extractors
"""
from typing import Dict, List, Optional, Protocol, Sequence, Tuple

import torch
import torch.nn as nn

from ...errors import ShapeMismatchError
from ...schemas import DSConfig, GSConfig


def attention_gate(img_feat: torch.Tensor, pose_feat: torch.Tensor) -> torch.Tensor:
    """img_feat * sigmoid(pose_feat), element-wise"""
    if img_feat.shape != pose_feat.shape:
        raise ShapeMismatchError(
            f"Attention gate needs matching shapes, got {tuple(img_feat.shape)} and {tuple(pose_feat.shape)}"
        )
    return img_feat * torch.sigmoid(pose_feat)


class ResidualBlock(nn.Module):
    """conv-BN-ReLU-conv-BN with an identity skip, then ReLU"""

    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(channels),
            nn.ReLU(),
            nn.Conv2d(channels, channels, kernel_size=3, padding=1, bias=False),
            nn.BatchNorm2d(channels),
        )
        self.act = nn.ReLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(x + self.body(x))


def _stem(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=1, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(),
    )


def _down(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(),
        ResidualBlock(out_ch),
    )


def _up(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.ConvTranspose2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(),
        ResidualBlock(out_ch),
    )


class PoseRenderGenerator(nn.Module):
    """
    Two-branch encoder-decoder rendering a person in a target pose.

    The image branch encodes I_A; the pose branch encodes the channel-stacked
    source and target heatmaps. Every encoder stage halves the resolution and
    doubles the channels. At the deepest level the two encodings are merged by
    a 1x1 conv; on the way up each decoder stage consumes the previous decoder
    output concatenated with the image features gated by the pose features of
    the same level. With `attention="single"` only the deepest level is gated.
    """

    def __init__(self, cfg: GSConfig):
        super().__init__()
        self.cfg = cfg
        self.channels = [cfg.base_filters * 2 ** level for level in range(cfg.levels + 1)]
        for level in range(1, cfg.levels + 1):
            if self.channels[level] != 2 * self.channels[level - 1]:
                raise ShapeMismatchError(f"Encoder level {level} does not double its channels")

        pose_in = 2 * cfg.heatmap_channels
        self.img_stem = _stem(3, self.channels[0])
        self.pose_stem = _stem(pose_in, self.channels[0])
        self.img_down = nn.ModuleList([_down(self.channels[l - 1], self.channels[l]) for l in range(1, cfg.levels + 1)])
        self.pose_down = nn.ModuleList([_down(self.channels[l - 1], self.channels[l]) for l in range(1, cfg.levels + 1)])

        deepest = self.channels[cfg.levels]
        self.merge = nn.Conv2d(2 * deepest, deepest, kernel_size=1, bias=False)
        # up[l - 1] maps level l to level l - 1
        self.up = nn.ModuleList([_up(2 * self.channels[l], self.channels[l - 1]) for l in range(1, cfg.levels + 1)])

        self.tail = nn.Sequential(*[ResidualBlock(self.channels[0]) for _ in range(cfg.residual_tail)])
        self.head = nn.Sequential(
            nn.Conv2d(self.channels[0], 3, kernel_size=1, bias=False),
            nn.Tanh(),
        )

    def level_shapes(self) -> List[Tuple[int, int]]:
        """(channels, spatial size) of the encoder output at levels 1..levels"""
        return [(self.channels[l], self.cfg.image_size // 2 ** l) for l in range(1, self.cfg.levels + 1)]

    def _check_inputs(self, image: torch.Tensor, hm_src: torch.Tensor, hm_tgt: torch.Tensor) -> None:
        size = self.cfg.image_size
        if image.dim() != 4 or tuple(image.shape[1:]) != (3, size, size):
            raise ShapeMismatchError(f"Renderer expects images of shape (B, 3, {size}, {size}), got {tuple(image.shape)}")
        for name, hm in (("source", hm_src), ("target", hm_tgt)):
            expected = (image.shape[0], self.cfg.heatmap_channels, size, size)
            if tuple(hm.shape) != expected:
                raise ShapeMismatchError(f"Renderer expects {name} heatmaps of shape {expected}, got {tuple(hm.shape)}")

    def forward(
        self,
        image: torch.Tensor,
        hm_src: torch.Tensor,
        hm_tgt: torch.Tensor,
    ) -> Tuple[torch.Tensor, Dict[int, torch.Tensor]]:
        """
        Returns:
            Tuple of (image in (-1, 1), {level: sigmoid(pose features)} for every gated level)
        """
        self._check_inputs(image, hm_src, hm_tgt)
        levels = self.cfg.levels
        img_feats = [self.img_stem(image)]
        pose_feats = [self.pose_stem(torch.cat([hm_src, hm_tgt], dim=1))]
        for l in range(1, levels + 1):
            img_feats.append(self.img_down[l - 1](img_feats[-1]))
            pose_feats.append(self.pose_down[l - 1](pose_feats[-1]))

        attention: Dict[int, torch.Tensor] = {}

        def skip(l: int) -> torch.Tensor:
            if self.cfg.attention == "multi" or l == levels:
                attention[l] = torch.sigmoid(pose_feats[l])
                return attention_gate(img_feats[l], pose_feats[l])
            return img_feats[l]

        x = self.merge(torch.cat([img_feats[levels], pose_feats[levels]], dim=1))
        for l in range(levels, 0, -1):
            x = self.up[l - 1](torch.cat([x, skip(l)], dim=1))
        return self.head(self.tail(x)), attention


class PatchDiscriminator(nn.Module):
    """
    Patch discriminator over channel-stacked (source image, candidate image).

    Stride-2 convs with leaky ReLU (batch norm after all but the first), then a
    one-channel conv and a sigmoid: one probability per receptive-field patch.
    """

    def __init__(self, cfg: DSConfig):
        super().__init__()
        self.cfg = cfg
        layers: List[nn.Module] = []
        in_ch = cfg.in_channels
        for i, out_ch in enumerate(cfg.filters):
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1))
            if i > 0:
                layers.append(nn.BatchNorm2d(out_ch))
            layers.append(nn.LeakyReLU(cfg.leaky_slope))
            in_ch = out_ch
        layers.append(nn.Conv2d(in_ch, 1, kernel_size=4, stride=1, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, source: torch.Tensor, candidate: torch.Tensor) -> torch.Tensor:
        if source.shape != candidate.shape or source.dim() != 4:
            raise ShapeMismatchError(
                f"Discriminator needs two (B, 3, S, S) images of equal shape, got {tuple(source.shape)} and {tuple(candidate.shape)}"
            )
        x = torch.cat([source, candidate], dim=1)
        if x.shape[1] != self.cfg.in_channels:
            raise ShapeMismatchError(f"Discriminator expects {self.cfg.in_channels} stacked channels, got {x.shape[1]}")
        return torch.sigmoid(self.net(x))


# ============================================================================
# FEATURE EXTRACTORS
# ============================================================================

class FeatureExtractor(Protocol):
    """Fixed network returning activations at the requested module indices"""

    def __call__(self, image: torch.Tensor, taps: Sequence[int]) -> Dict[int, torch.Tensor]:
        ...


def _tap_features(features: nn.Sequential, x: torch.Tensor, taps: Sequence[int]) -> Dict[int, torch.Tensor]:
    wanted = set(taps)
    if wanted and max(wanted) >= len(features):
        raise ShapeMismatchError(f"Tap {max(wanted)} beyond the {len(features)}-layer extractor")
    out: Dict[int, torch.Tensor] = {}
    for i, layer in enumerate(features):
        x = layer(x)
        if i in wanted:
            out[i] = x
            if len(out) == len(wanted):
                break
    return out


class RandomConvFeatureExtractor(nn.Module):
    """
    Frozen, seeded random conv stack laid out like the first ten modules of VGG-19.

    Indices 4 and 9 are the two pooling outputs.
    """

    def __init__(self, seed: int = 0, widths: Tuple[int, int] = (16, 32)):
        super().__init__()
        first, second = widths
        self.features = nn.Sequential(
            nn.Conv2d(3, first, 3, padding=1), nn.ReLU(),
            nn.Conv2d(first, first, 3, padding=1), nn.ReLU(),
            nn.MaxPool2d(2),
            nn.Conv2d(first, second, 3, padding=1), nn.ReLU(),
            nn.Conv2d(second, second, 3, padding=1), nn.ReLU(),
            nn.MaxPool2d(2),
        )
        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for layer in self.features:
                if isinstance(layer, nn.Conv2d):
                    fan_in = layer.in_channels * 9
                    layer.weight.copy_(torch.randn(layer.weight.shape, generator=gen) * (2.0 / fan_in) ** 0.5)
                    layer.bias.zero_()
        self.requires_grad_(False)
        self.eval()

    def forward(self, image: torch.Tensor, taps: Sequence[int]) -> Dict[int, torch.Tensor]:
        return _tap_features(self.features, image, taps)


class VGGFeatureExtractor(nn.Module):
    """
    torchvision VGG-19 convolutional trunk as a perceptual feature extractor.

    Inputs in [-1, 1] are mapped to ImageNet normalisation first. Pass
    `weights=None` for an untrained trunk (no download).
    """

    MEAN = (0.485, 0.456, 0.406)
    STD = (0.229, 0.224, 0.225)

    def __init__(self, weights: Optional[str] = "DEFAULT"):
        super().__init__()
        from torchvision.models import vgg19

        self.features = vgg19(weights=weights).features
        self.register_buffer("mean", torch.tensor(self.MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(self.STD).view(1, 3, 1, 1))
        self.requires_grad_(False)
        self.eval()

    def forward(self, image: torch.Tensor, taps: Sequence[int]) -> Dict[int, torch.Tensor]:
        x = ((image + 1.0) / 2.0 - self.mean) / self.std
        return _tap_features(self.features, x, taps)
