"""
Pytest configuration for test suite
"""
import os

import numpy as np
import pytest

# This runs before test modules import package code.
os.environ["PYTEST_RUNNING"] = "1"
os.environ["TIPS_LOG_TO_FILE"] = "false"

from tips_pose.schemas import DSConfig, DTConfig, GSConfig, GTConfig, KeypointSet  # noqa: E402
from tips_pose.services.text_encode import AttributeSchema, load_schema  # noqa: E402

from tests.helpers import make_keypoints  # noqa: E402


@pytest.fixture(scope="session")
def schema() -> AttributeSchema:
    """The bundled synthetic attribute schema"""
    return load_schema()


@pytest.fixture(scope="session")
def gender_head_schema() -> AttributeSchema:
    """Two-group schema: gender (subject) and head orientation"""
    return AttributeSchema.model_validate({
        "version": "test",
        "groups": [
            {
                "name": "gender",
                "options": ["man", "woman"],
                "subject": True,
                "phrases": {"man": "The man", "woman": "The woman"},
                "pronouns": {"man": "his", "woman": "her"},
            },
            {
                "name": "head",
                "options": ["straight", "left", "right"],
                "template": "{subject} is keeping {possessive} head {phrase}.",
                "phrases": {"straight": "straight", "left": "facing left", "right": "facing right"},
            },
        ],
    })


@pytest.fixture
def tiny_gt_cfg() -> GTConfig:
    """16 x 16 generator with two upsampling stages"""
    return GTConfig(embed_dim=38, latent_dim=8, noise_dim=8, upconv_filters=[8, 8], out_size=16)


@pytest.fixture
def tiny_dt_cfg() -> DTConfig:
    """Critic matching the 16 x 16 generator"""
    return DTConfig(embed_dim=38, latent_dim=8, conv_filters=[8, 8], in_size=16, point_conv_filters=8)


@pytest.fixture
def tiny_gs_cfg() -> GSConfig:
    return GSConfig(image_size=32, levels=4, base_filters=4, residual_tail=1)


@pytest.fixture
def tiny_ds_cfg() -> DSConfig:
    return DSConfig(filters=[4, 8])


@pytest.fixture
def centred_keypoints() -> KeypointSet:
    """A plausible upright skeleton in a 64 x 64 frame"""
    xy = np.array([
        [32, 14],  # nose
        [32, 22],  # neck
        [26, 23], [22, 31], [20, 39],  # right arm
        [38, 23], [42, 31], [44, 39],  # left arm
        [28, 38], [27, 48], [27, 58],  # right leg
        [36, 38], [37, 48], [37, 58],  # left leg
        [30, 12], [34, 12],  # eyes
        [28, 13], [36, 13],  # ears
    ], dtype=np.float64)
    return make_keypoints(xy)
