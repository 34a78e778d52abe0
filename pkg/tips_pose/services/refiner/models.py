"""
Facial keypoint refinement network
"""
import torch
import torch.nn as nn

from ...errors import ShapeMismatchError
from ...schemas import RefinerConfig


FACE_VECTOR_DIM = 10


class RefineNet(nn.Module):
    """Fully-connected regressor over the flattened, normalised five-joint face"""

    def __init__(self, cfg: RefinerConfig):
        super().__init__()
        self.cfg = cfg
        layers = []
        in_dim = FACE_VECTOR_DIM
        for _ in range(cfg.hidden_layers):
            layers += [nn.Linear(in_dim, cfg.hidden_dim), nn.ReLU()]
            in_dim = cfg.hidden_dim
        layers += [nn.Linear(in_dim, FACE_VECTOR_DIM), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 2 or x.shape[1] != FACE_VECTOR_DIM:
            raise ShapeMismatchError(f"RefineNet expects (B, {FACE_VECTOR_DIM}) input, got {tuple(x.shape)}")
        return self.net(x)

    def reset_parameters(self) -> None:
        """He-normal weights on the ReLU layers, Xavier-normal on the tanh head, zero biases"""
        linears = [m for m in self.net if isinstance(m, nn.Linear)]
        for layer in linears[:-1]:
            nn.init.kaiming_normal_(layer.weight, a=0, mode="fan_in", nonlinearity="relu")
            nn.init.zeros_(layer.bias)
        nn.init.xavier_normal_(linears[-1].weight)
        nn.init.zeros_(linears[-1].bias)
