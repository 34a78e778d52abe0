"""
Checkpoint container shared by all training stages
"""
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np
import torch
import torch.nn as nn


CHECKPOINT_FORMAT_VERSION = 1

STAGE_T2P = "t2p"
STAGE_REFINER = "refiner"
STAGE_RENDER = "render"
STAGE_GENDER = "gender"


@dataclass
class Checkpoint:
    """
    Stage tag, named parameter blocks and a config echo.

    Blocks are little-endian float32 arrays keyed by "<network>.<state_dict key>";
    integer buffers (batch-norm counters) round-trip exactly through float32.
    """
    stage: str
    blocks: Dict[str, np.ndarray]
    config: Dict[str, Any] = field(default_factory=dict)
    iteration: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)
    format_version: int = CHECKPOINT_FORMAT_VERSION

    @classmethod
    def from_modules(
        cls,
        stage: str,
        modules: Dict[str, nn.Module],
        config: Dict[str, Any],
        iteration: int,
        metadata: Dict[str, Any],
    ) -> "Checkpoint":
        """Snapshot the state dicts of one or more networks"""
        blocks: Dict[str, np.ndarray] = {}
        for prefix, module in modules.items():
            for key, tensor in module.state_dict().items():
                blocks[f"{prefix}.{key}"] = tensor.detach().cpu().numpy().astype("<f4")
        return cls(stage=stage, blocks=blocks, config=config, iteration=iteration, metadata=metadata)

    def load_into(self, prefix: str, module: nn.Module) -> nn.Module:
        """Restore one network's parameters from the blocks under `prefix`"""
        marker = f"{prefix}."
        state = {
            name[len(marker):]: torch.from_numpy(np.array(block, dtype=np.float32))
            for name, block in self.blocks.items()
            if name.startswith(marker)
        }
        expected = module.state_dict()
        converted = {key: value.to(expected[key].dtype) if key in expected else value for key, value in state.items()}
        module.load_state_dict(converted, strict=True)
        return module
