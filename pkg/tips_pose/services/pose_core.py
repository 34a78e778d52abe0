"""
Keypoint and heatmap geometry

Gaussian heatmap rendering, maximum-activation extraction and the facial
normalisation used by the refiner. Every function here is pure.
"""
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger

from ..errors import TipsValidationError
from ..schemas import (
    FACIAL_INDICES,
    NUM_JOINTS,
    FacialNormParams,
    HeatmapSpec,
    KeypointSet,
)


DEFAULT_THRESHOLD = 0.2


class KeypointValidationError(TipsValidationError):
    """Raised when keypoints cannot be placed on the requested heatmap"""
    pass


class HeatmapShapeError(TipsValidationError):
    """Raised when a heatmap array does not have 18 channels of at least 8x8"""
    pass


class RefinementInapplicableError(TipsValidationError):
    """Raised when a facial joint needed for normalisation is occluded"""
    pass


class DegenerateFaceError(TipsValidationError):
    """Raised when all five facial joints coincide"""
    pass


@dataclass(frozen=True)
class HeatmapTensor:
    """18 x H x W stack of per-joint maps with values in [0, 1]"""
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 3 or values.shape[0] != NUM_JOINTS:
            raise HeatmapShapeError(f"Expected {NUM_JOINTS} x H x W heatmaps, got shape {values.shape}")
        if values.shape[1] < 8 or values.shape[2] < 8:
            raise HeatmapShapeError(f"Heatmaps must be at least 8x8, got {values.shape[1]}x{values.shape[2]}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise HeatmapShapeError(
                f"Heatmap values must lie in [0, 1], got [{values.min()}, {values.max()}]"
            )
        object.__setattr__(self, "values", values)

    @property
    def height(self) -> int:
        return int(self.values.shape[1])

    @property
    def width(self) -> int:
        return int(self.values.shape[2])

    @classmethod
    def from_generator_output(cls, output: np.ndarray) -> "HeatmapTensor":
        """Map tanh output in (-1, 1) to the [0, 1] storage range via (x + 1) / 2"""
        return cls(np.clip((np.asarray(output, dtype=np.float32) + 1.0) / 2.0, 0.0, 1.0))

    def to_critic_range(self) -> np.ndarray:
        """Map stored [0, 1] values to the critic's [-1, 1] input range via 2x - 1"""
        return self.values * 2.0 - 1.0


def to_map_coords(x: float, y: float, src_w: int, src_h: int, dst_w: int, dst_h: int) -> Tuple[float, float]:
    """Rescale a point between frames, treating pixel centres as aligned"""
    return (
        (x + 0.5) * dst_w / src_w - 0.5,
        (y + 0.5) * dst_h / src_h - 0.5,
    )


def render_heatmaps(kps: KeypointSet, spec: HeatmapSpec) -> HeatmapTensor:
    """
    Render one Gaussian bump per visible joint.

    Keypoints are rescaled from the image frame to the heatmap frame first.
    Occluded joints produce all-zero channels.

    Args:
        kps: Keypoints in image pixels
        spec: Target heatmap resolution and sigma

    Returns:
        HeatmapTensor of shape 18 x spec.height x spec.width

    Raises:
        KeypointValidationError: If a visible joint lies outside its image frame
    """
    values = np.zeros((NUM_JOINTS, spec.height, spec.width), dtype=np.float32)
    cols = np.arange(spec.width, dtype=np.float64)[None, :]
    rows = np.arange(spec.height, dtype=np.float64)[:, None]
    two_sigma_sq = 2.0 * spec.sigma ** 2

    for j, joint in enumerate(kps.joints):
        if not joint.visible:
            continue
        if not (0.0 <= joint.x < kps.image_width and 0.0 <= joint.y < kps.image_height):
            raise KeypointValidationError(
                f"Joint {j} at ({joint.x}, {joint.y}) lies outside its {kps.image_width}x{kps.image_height} frame"
            )
        x, y = to_map_coords(joint.x, joint.y, kps.image_width, kps.image_height, spec.width, spec.height)
        gauss = np.exp(-((cols - x) ** 2 + (rows - y) ** 2) / two_sigma_sq)
        values[j] = np.clip(gauss * spec.amplitude, 0.0, 1.0)

    return HeatmapTensor(values)


def extract_keypoints(
    hm: HeatmapTensor,
    threshold: float = DEFAULT_THRESHOLD,
    image_width: Optional[int] = None,
    image_height: Optional[int] = None,
) -> KeypointSet:
    """
    Read joints back from heatmaps by maximum activation.

    A channel whose peak is below `threshold` marks its joint occluded. Ties
    resolve to the lowest row-major index.

    Args:
        hm: Heatmaps in [0, 1] (rescale generator output first)
        threshold: Occlusion floor on the channel maximum
        image_width: Frame to map coordinates into (defaults to the heatmap width)
        image_height: Frame to map coordinates into (defaults to the heatmap height)

    Returns:
        KeypointSet in the requested frame
    """
    width = image_width or hm.width
    height = image_height or hm.height
    flat = hm.values.reshape(NUM_JOINTS, -1)
    peaks_idx = np.argmax(flat, axis=1)
    peaks = flat[np.arange(NUM_JOINTS), peaks_idx]

    xy = np.zeros((NUM_JOINTS, 2), dtype=np.float64)
    visible = np.zeros(NUM_JOINTS, dtype=bool)
    for j in range(NUM_JOINTS):
        if float(peaks[j]) < threshold:
            continue
        row, col = divmod(int(peaks_idx[j]), hm.width)
        if width == hm.width and height == hm.height:
            xy[j] = (col, row)
        else:
            xy[j] = to_map_coords(col, row, hm.width, hm.height, width, height)
            xy[j, 0] = min(max(xy[j, 0], 0.0), np.nextafter(width, 0))
            xy[j, 1] = min(max(xy[j, 1], 0.0), np.nextafter(height, 0))
        visible[j] = True

    return KeypointSet.from_arrays(xy, visible, width, height)


def facial_coordinates(kps: KeypointSet) -> np.ndarray:
    """(5, 2) facial coordinates in refinement order (nose, eyes, ears)"""
    return kps.xy()[list(FACIAL_INDICES)]


def normalize_facial(kps: KeypointSet) -> Tuple[np.ndarray, FacialNormParams]:
    """
    Translate the face so the nose is at the origin and scale it into +-1.

    Args:
        kps: Keypoints with all five facial joints visible

    Returns:
        Tuple of (10-vector of flattened (x, y) pairs, params for the inverse)

    Raises:
        RefinementInapplicableError: If any facial joint is occluded
        DegenerateFaceError: If all facial joints coincide with the nose
    """
    visibility = kps.visibility()
    missing = [i for i in FACIAL_INDICES if not visibility[i]]
    if missing:
        raise RefinementInapplicableError(f"Facial joints {missing} are occluded; refinement needs all five")

    face = facial_coordinates(kps)
    nose = face[0].copy()
    translated = face - nose
    scale = float(np.max(np.abs(translated)))
    if scale == 0.0:
        raise DegenerateFaceError(f"All facial joints coincide at ({nose[0]}, {nose[1]})")

    params = FacialNormParams(nose_origin=(float(nose[0]), float(nose[1])), scale=scale)
    return (translated / scale).reshape(-1), params


def denormalize_facial(vec10: np.ndarray, params: FacialNormParams) -> np.ndarray:
    """
    Invert normalize_facial.

    Args:
        vec10: Flattened normalised facial coordinates
        params: Translation and scale from normalize_facial

    Returns:
        (5, 2) array of facial coordinates in the original frame
    """
    vec = np.asarray(vec10, dtype=np.float64).reshape(5, 2)
    return vec * params.scale + np.asarray(params.nose_origin, dtype=np.float64)


def replace_facial(kps: KeypointSet, face: np.ndarray) -> KeypointSet:
    """
    Return a copy of `kps` with the five facial joints moved to `face`.

    Coordinates are clamped to the last pixel of the image frame; visibility
    flags and the 13 non-facial joints are untouched.
    """
    xy = kps.xy()
    clamped = np.asarray(face, dtype=np.float64).copy()
    clamped[:, 0] = np.clip(clamped[:, 0], 0.0, kps.image_width - 1.0)
    clamped[:, 1] = np.clip(clamped[:, 1], 0.0, kps.image_height - 1.0)
    if not np.allclose(clamped, face):
        logger.debug("Refined facial joints clamped into the image frame")
    joints: List = list(kps.joints)
    for slot, idx in enumerate(FACIAL_INDICES):
        joints[idx] = joints[idx].model_copy(update={"x": float(clamped[slot, 0]), "y": float(clamped[slot, 1])})
    return kps.model_copy(update={"joints": tuple(joints)})


def image_heatmap_spec(size: int, sigma: float = 1.5, reference_size: int = 64) -> HeatmapSpec:
    """Heatmap spec at image resolution with sigma scaled from the 64 x 64 reference"""
    return HeatmapSpec(height=size, width=size, sigma=sigma * size / reference_size)
