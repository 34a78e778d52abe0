"""
Keypoint builders shared by the test modules
"""
import numpy as np

from tips_pose.schemas import NUM_JOINTS, KeypointSet


def make_keypoints(xy, visible=None, width: int = 64, height: int = 64) -> KeypointSet:
    """KeypointSet from an (18, 2) array; every joint visible by default"""
    xy = np.asarray(xy, dtype=np.float64)
    if visible is None:
        visible = np.ones(NUM_JOINTS, dtype=bool)
    return KeypointSet.from_arrays(xy, visible, width, height)


def random_keypoints(rng: np.random.Generator, size: int = 64, border: int = 5, occlude: float = 0.2) -> KeypointSet:
    """Integer keypoints at least `border` pixels from every edge, some occluded"""
    xy = rng.integers(border, size - border, size=(NUM_JOINTS, 2)).astype(np.float64)
    visible = rng.random(NUM_JOINTS) >= occlude
    xy[~visible] = 0.0
    return make_keypoints(xy, visible, size, size)
