"""
PNG I/O and conversion between 8-bit RGB and the networks' [-1, 1] range
"""
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import TipsValidationError


def load_png(path: Path) -> np.ndarray:
    """Read an image file as an H x W x 3 uint8 array"""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def save_png(image: np.ndarray, path: Path) -> Path:
    """Write an H x W x 3 uint8 array as PNG"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image, dtype=np.uint8)).save(path, format="PNG")
    return path


def to_model_range(image: np.ndarray) -> np.ndarray:
    """H x W x 3 uint8 -> 3 x H x W float32 in [-1, 1]"""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise TipsValidationError(f"Expected an H x W x 3 image, got shape {image.shape}")
    return (image.astype(np.float32) / 127.5 - 1.0).transpose(2, 0, 1).copy()


def from_model_range(image: np.ndarray) -> np.ndarray:
    """3 x H x W float in [-1, 1] -> H x W x 3 uint8"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise TipsValidationError(f"Expected a 3 x H x W image, got shape {image.shape}")
    scaled = np.clip(np.rint((image + 1.0) * 127.5), 0, 255)
    return scaled.astype(np.uint8).transpose(1, 2, 0).copy()
