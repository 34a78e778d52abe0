"""
Pydantic schemas for pose records, stage configs and dataset metadata
"""
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .utils.seeding import derive_seed


# COCO-18 joint order used by every heatmap channel and keypoint list
COCO18_JOINTS: Tuple[str, ...] = (
    "nose",
    "neck",
    "right_shoulder",
    "right_elbow",
    "right_wrist",
    "left_shoulder",
    "left_elbow",
    "left_wrist",
    "right_hip",
    "right_knee",
    "right_ankle",
    "left_hip",
    "left_knee",
    "left_ankle",
    "right_eye",
    "left_eye",
    "right_ear",
    "left_ear",
)
NUM_JOINTS = len(COCO18_JOINTS)
JOINT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(COCO18_JOINTS)}

# Facial subset in the order it is flattened for refinement
FACIAL_JOINTS: Tuple[str, ...] = ("nose", "right_eye", "left_eye", "right_ear", "left_ear")
FACIAL_INDICES: Tuple[int, ...] = tuple(JOINT_INDEX[name] for name in FACIAL_JOINTS)


# ============================================================================
# POSE TYPES
# ============================================================================

class Joint(BaseModel):
    """Single body joint in pixel coordinates"""
    model_config = ConfigDict(frozen=True)

    x: float = Field(..., description="Column in pixels")
    y: float = Field(..., description="Row in pixels")
    visible: bool = Field(True, description="False for occluded joints; coordinates are then ignored")


class KeypointSet(BaseModel):
    """18 COCO-ordered joints in an image frame"""
    model_config = ConfigDict(frozen=True)

    joints: Tuple[Joint, ...]
    image_width: int = Field(..., gt=0)
    image_height: int = Field(..., gt=0)

    @model_validator(mode="after")
    def _check_joints(self) -> "KeypointSet":
        if len(self.joints) != NUM_JOINTS:
            raise ValueError(f"KeypointSet needs exactly {NUM_JOINTS} joints, got {len(self.joints)}")
        for name, joint in zip(COCO18_JOINTS, self.joints):
            if not joint.visible:
                continue
            if not (0 <= joint.x < self.image_width and 0 <= joint.y < self.image_height):
                raise ValueError(
                    f"Visible joint '{name}' at ({joint.x}, {joint.y}) lies outside "
                    f"{self.image_width}x{self.image_height}"
                )
        return self

    @classmethod
    def from_arrays(
        cls,
        xy: np.ndarray,
        visible: np.ndarray,
        image_width: int,
        image_height: int,
    ) -> "KeypointSet":
        """Build from an (18, 2) coordinate array and an (18,) visibility mask"""
        xy = np.asarray(xy, dtype=np.float64)
        visible = np.asarray(visible, dtype=bool)
        joints = tuple(
            Joint(x=float(x), y=float(y), visible=bool(v))
            for (x, y), v in zip(xy, visible)
        )
        return cls(joints=joints, image_width=image_width, image_height=image_height)

    def xy(self) -> np.ndarray:
        """(18, 2) float array of (x, y)"""
        return np.array([[j.x, j.y] for j in self.joints], dtype=np.float64)

    def visibility(self) -> np.ndarray:
        """(18,) boolean visibility mask"""
        return np.array([j.visible for j in self.joints], dtype=bool)

    def joint(self, name: str) -> Joint:
        return self.joints[JOINT_INDEX[name]]


class HeatmapSpec(BaseModel):
    """Resolution and Gaussian width of a heatmap stack"""
    model_config = ConfigDict(frozen=True)

    height: int = Field(64, ge=8)
    width: int = Field(64, ge=8)
    sigma: float = Field(1.5, gt=0)
    channels: Literal[18] = NUM_JOINTS
    amplitude: float = Field(1.0, ge=1.0, le=1.0)


class FacialNormParams(BaseModel):
    """Translation and scale that map the facial joints into a +-1 square"""
    model_config = ConfigDict(frozen=True)

    nose_origin: Tuple[float, float]
    scale: float = Field(..., gt=0)


# ============================================================================
# TEXT TYPES
# ============================================================================

class DescriptionRecord(BaseModel):
    """Structured pose description: one option per single-choice group, flags per multi group"""
    selections: Dict[str, str] = Field(default_factory=dict)
    flags: Dict[str, Dict[str, bool]] = Field(default_factory=dict)


# ============================================================================
# STAGE CONFIGS
# ============================================================================

class GTConfig(BaseModel):
    """Text-to-heatmap generator architecture"""
    embed_dim: int = Field(38, gt=0, description="Input embedding length")
    latent_dim: int = 128
    noise_dim: int = 128
    upconv_filters: List[int] = Field(default_factory=lambda: [256, 128, 64, 32])
    out_channels: Literal[18] = NUM_JOINTS
    out_size: int = 64
    seed_size: int = 4
    leaky_slope: float = 0.2

    @model_validator(mode="after")
    def _check_geometry(self) -> "GTConfig":
        if self.seed_size * 2 ** len(self.upconv_filters) != self.out_size:
            raise ValueError(
                f"{len(self.upconv_filters)} stride-2 stages from {self.seed_size}x{self.seed_size} "
                f"cannot reach {self.out_size}x{self.out_size}"
            )
        return self


class DTConfig(BaseModel):
    """Heatmap critic architecture"""
    embed_dim: int = Field(38, gt=0)
    latent_dim: int = 128
    conv_filters: List[int] = Field(default_factory=lambda: [32, 64, 128, 256])
    in_size: int = 64
    tile: int = 4
    point_conv_filters: int = 256
    leaky_slope: float = 0.2

    @model_validator(mode="after")
    def _check_geometry(self) -> "DTConfig":
        if self.in_size // 2 ** len(self.conv_filters) != self.tile:
            raise ValueError(
                f"{len(self.conv_filters)} stride-2 convs on {self.in_size}x{self.in_size} "
                f"do not end at the {self.tile}x{self.tile} embedding tile"
            )
        return self


class T2PTrainConfig(BaseModel):
    """Stage-1 WGAN-GP optimisation settings"""
    lr: float = 1e-4
    adam_beta1: float = 0.0
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    gp_lambda: float = Field(10.0, gt=0)
    critic_steps_per_gen: int = Field(5, ge=1)
    batch_size: int = Field(16, ge=1)
    iterations: int = Field(2000, ge=1, description="Generator updates; each follows critic_steps_per_gen critic updates")
    init_std: float = 0.02
    seed: Optional[int] = None


class RefinerConfig(BaseModel):
    """Stage-2 facial refiner settings"""
    hidden_dim: int = 128
    hidden_layers: int = 3
    lr: float = 1e-2
    momentum: float = 0.9
    perturbation_sigma: float = Field(0.05, ge=0)
    epochs: int = Field(1000, ge=1)
    batch_size: int = Field(8, ge=1)
    divergence_threshold: float = 1e3
    seed: Optional[int] = None


class GSConfig(BaseModel):
    """Attention-gated rendering generator architecture"""
    image_size: int = 64
    levels: int = Field(4, ge=1)
    base_filters: int = Field(64, ge=1)
    residual_tail: int = Field(4, ge=0)
    attention: Literal["multi", "single"] = "multi"
    heatmap_channels: Literal[18] = NUM_JOINTS

    @model_validator(mode="after")
    def _check_geometry(self) -> "GSConfig":
        if self.image_size % 2 ** self.levels != 0:
            raise ValueError(f"image_size {self.image_size} is not divisible by 2^{self.levels}")
        return self


class DSConfig(BaseModel):
    """Patch discriminator architecture"""
    in_channels: int = 6
    filters: List[int] = Field(default_factory=lambda: [64, 128, 256, 512])
    leaky_slope: float = 0.2


class RenderTrainConfig(BaseModel):
    """Stage-3 optimisation settings"""
    lambda1: float = Field(5.0, ge=0, description="Pixel L1 weight")
    lambda2: float = Field(1.0, ge=0, description="Adversarial weight")
    lambda3: float = Field(5.0, ge=0, description="Perceptual weight")
    lr: float = 1e-3
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    perceptual_taps: List[int] = Field(default_factory=lambda: [4, 9], min_length=2, max_length=2, description="Extractor module indices of the two perceptual terms")
    batch_size: int = Field(4, ge=1)
    iterations: int = Field(500, ge=1)
    init_std: float = 0.02
    bce_eps: float = 1e-7
    seed: Optional[int] = None


class GenderClassifierConfig(BaseModel):
    """Toy gender classifier used by the consistency metric"""
    lr: float = 1e-3
    epochs: int = Field(5, ge=1)
    batch_size: int = Field(32, ge=1)
    seed: Optional[int] = None


class DataConfig(BaseModel):
    """Synthetic dataset generation settings"""
    count: int = Field(2200, ge=1)
    size: int = Field(64, ge=32)
    test_fraction: float = Field(1 / 11, ge=0, lt=1)
    heatmap_sigma: float = Field(1.5, gt=0)


class PipelineConfig(BaseModel):
    """Everything one CLI invocation needs"""
    seed: int = 0
    out_dir: str = "./tips_out"
    schema_path: Optional[str] = None
    dataset_dir: Optional[str] = None
    data: DataConfig = Field(default_factory=DataConfig)
    generator: GTConfig = Field(default_factory=GTConfig)
    critic: DTConfig = Field(default_factory=DTConfig)
    t2p: T2PTrainConfig = Field(default_factory=T2PTrainConfig)
    refiner: RefinerConfig = Field(default_factory=RefinerConfig)
    renderer: GSConfig = Field(default_factory=GSConfig)
    discriminator: DSConfig = Field(default_factory=DSConfig)
    render: RenderTrainConfig = Field(default_factory=RenderTrainConfig)
    gender: GenderClassifierConfig = Field(default_factory=GenderClassifierConfig)

    def with_derived_seeds(self) -> "PipelineConfig":
        """Fill unset stage seeds from the global seed"""
        return self.model_copy(update={
            "t2p": self.t2p.model_copy(update={"seed": self.t2p.seed if self.t2p.seed is not None else derive_seed(self.seed, "t2p")}),
            "refiner": self.refiner.model_copy(update={"seed": self.refiner.seed if self.refiner.seed is not None else derive_seed(self.seed, "refiner")}),
            "render": self.render.model_copy(update={"seed": self.render.seed if self.render.seed is not None else derive_seed(self.seed, "render")}),
            "gender": self.gender.model_copy(update={"seed": self.gender.seed if self.gender.seed is not None else derive_seed(self.seed, "gender")}),
        })


# ============================================================================
# SYNTHETIC DATA
# ============================================================================

class Palette(BaseModel):
    """RGB colours of one synthetic identity"""
    model_config = ConfigDict(frozen=True)

    background: Tuple[int, int, int]
    skin: Tuple[int, int, int]
    top: Tuple[int, int, int]
    bottom: Tuple[int, int, int]


class FigureParams(BaseModel):
    """Identity and pose of one stick figure"""
    model_config = ConfigDict(frozen=True)

    # identity
    gender: Literal["man", "woman"]
    thickness: int = Field(..., ge=1)
    palette: Palette
    scale: float = Field(..., gt=0, description="Figure height in pixels")
    center_x: float

    # pose (degrees)
    right_shoulder: float
    left_shoulder: float
    right_elbow: float
    left_elbow: float
    right_hip: float
    left_hip: float
    right_knee: float
    left_knee: float
    head_yaw: float
    body: Literal["front", "left", "right"]
    head: Literal["straight", "partially_left", "partially_right"]


class DatasetManifest(BaseModel):
    """Index of a generated dataset"""
    format: str = "tips-synth-v1"
    seed: int
    size: int
    schema_id: str
    ids: List[str]
    splits: Dict[str, List[str]]
    pairs: List[Tuple[str, str]] = Field(default_factory=list)

    @field_validator("splits")
    @classmethod
    def _check_disjoint(cls, splits: Dict[str, List[str]]) -> Dict[str, List[str]]:
        train = set(splits.get("train", []))
        test = set(splits.get("test", []))
        if train & test:
            raise ValueError(f"train/test splits overlap on {sorted(train & test)[:5]}")
        return splits
