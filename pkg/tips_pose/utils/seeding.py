"""
Deterministic seeding helpers
"""
import hashlib
import random

import numpy as np
import torch


def derive_seed(global_seed: int, name: str) -> int:
    """
    Derive a stable child seed from a global seed and a stage/sample name.

    Uses a hash rather than Python's salted hash() so the value is identical
    across processes and platforms.

    Args:
        global_seed: Root seed
        name: Stage or sample identifier

    Returns:
        Non-negative 31-bit seed
    """
    digest = hashlib.sha256(f"{global_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little") & 0x7FFFFFFF


def seed_everything(seed: int) -> torch.Generator:
    """
    Seed python, numpy and torch global RNGs and return a dedicated torch generator.

    Args:
        seed: Seed value

    Returns:
        torch.Generator seeded with `seed` for data order and noise
    """
    random.seed(seed)
    np.random.seed(seed % (2 ** 32))
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)
    generator = torch.Generator()
    generator.manual_seed(seed)
    return generator


def batch_indices(n: int, batch_size: int, generator: torch.Generator) -> torch.Tensor:
    """
    Draw one batch of sample indices.

    Datasets at least as large as the batch are sampled without replacement;
    smaller ones (single-sample overfitting) repeat their items.

    Args:
        n: Dataset size
        batch_size: Requested batch size
        generator: Seeded generator driving the draw

    Returns:
        Long tensor of `batch_size` indices
    """
    if n >= batch_size:
        return torch.randperm(n, generator=generator)[:batch_size]
    return torch.arange(batch_size) % n
