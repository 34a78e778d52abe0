"""
Procedural stick-figure dataset

Figures are posed by forward kinematics from joint angles, described by
thresholding those angles, and drawn with Pillow at 4x supersampling. Datasets
are written in the DF-PASS layout (annotation lines plus a DeepFashion-style
keypoint table) so real annotations load through the same reader.
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from PIL import Image, ImageDraw

from ..errors import TipsError, TipsValidationError
from ..schemas import (
    JOINT_INDEX,
    NUM_JOINTS,
    DatasetManifest,
    DescriptionRecord,
    FigureParams,
    KeypointSet,
    Palette,
)
from ..utils.imaging import load_png, save_png, to_model_range
from ..utils.seeding import derive_seed
from .text_encode import (
    AttributeSchema,
    MalformedVectorError,
    TextEmbedding,
    decode_manyhot,
    encode_manyhot,
    render_description_text,
    save_schema,
)


DATASET_FORMAT = "tips-synth-v1"
SUPERSAMPLE = 4

# Description thresholds (degrees)
ARM_FOLDED_BELOW = 120.0
ARM_RAISED_ABOVE = 60.0
LEG_FOLDED_BELOW = 140.0
LEG_SPREAD_ABOVE = 25.0
HEAD_TURN_ABOVE = 15.0

# Body turned sideways: yaw offset of the face and horizontal squash of the torso
BODY_TURN_DEG = 35.0
SIDE_WIDTH = 0.55

# Face on a sphere around the nose: (azimuth, vertical offset in head radii)
FACE_FEATURES = {
    "right_eye": (-30.0, -0.35),
    "left_eye": (30.0, -0.35),
    "right_ear": (-90.0, -0.15),
    "left_ear": (90.0, -0.15),
}
EAR_VISIBLE_ABOVE = -0.6

DEFAULT_ANATOMY: Dict[str, Tuple[float, float]] = {
    "shoulder": (0.0, 170.0),
    "elbow": (40.0, 180.0),
    "hip": (-10.0, 50.0),
    "knee": (70.0, 180.0),
    "head_yaw": (-40.0, 40.0),
}

ANNOTATIONS_FILE = "annotations.txt"
KEYPOINTS_FILE = "keypoints.csv"
MANIFEST_FILE = "manifest.json"
SCHEMA_FILE = "schema.json"
IMAGES_DIR = "images"


class DatasetError(TipsError):
    """Raised when dataset files are missing, unreadable or inconsistent"""
    pass


class SchemaMismatchError(TipsValidationError):
    """Raised when annotation vectors do not fit the attribute schema"""
    pass


@dataclass
class PoseSample:
    """One image with its keypoints and description"""
    sample_id: str
    image: np.ndarray
    keypoints: Optional[KeypointSet]
    record: DescriptionRecord
    embedding: TextEmbedding
    sentence: str
    params: Optional[FigureParams] = None


# ============================================================================
# FIGURE GEOMETRY
# ============================================================================

def tag_size(size: int) -> int:
    """Side of the top-left gender tag block"""
    return max(2, size // 32)


def figure_margin(size: int) -> int:
    return max(4, size // 10)


def _direction(angle_deg: float, side: int) -> np.ndarray:
    """Unit limb direction: 0 hangs straight down, positive swings outward on `side`"""
    a = math.radians(angle_deg)
    return np.array([side * math.sin(a), math.cos(a)])


def _face_yaw(params: FigureParams) -> float:
    offset = {"front": 0.0, "left": BODY_TURN_DEG, "right": -BODY_TURN_DEG}[params.body]
    return params.head_yaw + offset


def figure_keypoints(params: FigureParams, size: int) -> Tuple[KeypointSet, float]:
    """
    Forward kinematics for one figure.

    The skeleton is built in a neck-centred frame, shrunk if needed to fit
    inside the image margins, and rounded to integer pixels. Occluded facial
    joints carry (0, 0).

    Returns:
        Tuple of (keypoints in a size x size frame, head radius in pixels)
    """
    h = params.scale
    width = 1.0 if params.body == "front" else SIDE_WIDTH
    man = params.gender == "man"
    shoulder_w = (0.15 if man else 0.12) * h * width
    hip_w = (0.08 if man else 0.10) * h * width
    radius = 0.075 * h
    upper, fore, thigh, shin = 0.17 * h, 0.15 * h, 0.23 * h, 0.22 * h

    xy = np.zeros((NUM_JOINTS, 2))
    visible = np.ones(NUM_JOINTS, dtype=bool)

    def put(name: str, point: np.ndarray) -> None:
        xy[JOINT_INDEX[name]] = point

    put("neck", np.array([0.0, 0.0]))
    nose = np.array([0.0, -0.13 * h])
    put("nose", nose)

    # the person's right side appears on the image left
    for prefix, side in (("right", -1), ("left", 1)):
        shoulder_angle = getattr(params, f"{prefix}_shoulder")
        elbow_angle = getattr(params, f"{prefix}_elbow")
        hip_angle = getattr(params, f"{prefix}_hip")
        knee_angle = getattr(params, f"{prefix}_knee")

        shoulder = np.array([side * shoulder_w, 0.03 * h])
        elbow = shoulder + upper * _direction(shoulder_angle, side)
        wrist = elbow + fore * _direction(shoulder_angle - (180.0 - elbow_angle), side)
        hip = np.array([side * hip_w, 0.36 * h])
        knee = hip + thigh * _direction(hip_angle, side)
        ankle = knee + shin * _direction(hip_angle + (180.0 - knee_angle), side)
        for joint, point in (("shoulder", shoulder), ("elbow", elbow), ("wrist", wrist),
                             ("hip", hip), ("knee", knee), ("ankle", ankle)):
            put(f"{prefix}_{joint}", point)

    yaw = _face_yaw(params)
    for name, (azimuth, dy) in FACE_FEATURES.items():
        angle = math.radians(azimuth + yaw)
        put(name, nose + np.array([radius * math.sin(angle), dy * radius]))
        floor = 0.0 if name.endswith("eye") else EAR_VISIBLE_ABOVE
        visible[JOINT_INDEX[name]] = math.cos(angle) > floor

    # fit the visible skeleton plus head circle and limb thickness into the margins
    pad = radius + params.thickness
    pts = xy[visible]
    lo = np.minimum(pts.min(axis=0), nose - pad)
    hi = np.maximum(pts.max(axis=0), nose + pad)
    margin = figure_margin(size)
    avail = (size - 1) - 2 * margin
    span = np.maximum(hi - lo, 1e-6)
    k = min(1.0, avail / span[0], avail / span[1])
    half = (hi - lo) * k / 2.0
    cx = min(max(params.center_x, margin + half[0]), size - 1 - margin - half[0])
    cy = size / 2.0
    mid = (hi + lo) / 2.0
    placed = np.rint((xy - mid) * k + np.array([cx, cy]))
    placed = np.clip(placed, margin, size - 1 - margin)
    placed[~visible] = 0.0

    return KeypointSet.from_arrays(placed, visible, size, size), radius * k


# ============================================================================
# SAMPLING AND DESCRIPTION
# ============================================================================

def _anatomy(schema: AttributeSchema) -> Dict[str, Tuple[float, float]]:
    ranges = dict(DEFAULT_ANATOMY)
    ranges.update({k: tuple(v) for k, v in schema.anatomy.items()})
    return ranges


def _palette(rng: np.random.Generator, gender: str) -> Palette:
    def colour(lo: Sequence[int], hi: Sequence[int]) -> Tuple[int, int, int]:
        return tuple(int(rng.integers(a, b + 1)) for a, b in zip(lo, hi))

    if gender == "woman":
        top = colour((170, 30, 60), (240, 110, 150))
        bottom = colour((120, 20, 90), (200, 90, 170))
    else:
        top = colour((30, 60, 140), (90, 130, 230))
        bottom = colour((30, 40, 50), (90, 100, 120))
    return Palette(
        background=colour((150, 150, 150), (225, 225, 225)),
        skin=colour((180, 120, 90), (245, 200, 170)),
        top=top,
        bottom=bottom,
    )


def sample_identity(rng_seed: int, size: int = 64) -> Dict[str, object]:
    """Identity attributes (gender, thickness, palette, scale, horizontal centre)"""
    rng = np.random.default_rng(rng_seed)
    gender = "woman" if rng.random() < 0.5 else "man"
    return {
        "gender": gender,
        "thickness": max(1, size // 64) + int(rng.integers(0, 2)),
        "palette": _palette(rng, gender),
        "scale": float(rng.uniform(0.75, 0.9) * size),
        "center_x": float(size / 2.0 + rng.uniform(-0.05, 0.05) * size),
    }


def _head_label(head_yaw: float) -> str:
    if head_yaw > HEAD_TURN_ABOVE:
        return "partially_left"
    if head_yaw < -HEAD_TURN_ABOVE:
        return "partially_right"
    return "straight"


def arm_label(shoulder: float, elbow: float) -> str:
    if elbow < ARM_FOLDED_BELOW:
        return "folded"
    if shoulder > ARM_RAISED_ABOVE:
        return "raised"
    return "down"


def leg_label(hip: float, knee: float) -> str:
    if knee < LEG_FOLDED_BELOW:
        return "folded"
    if hip > LEG_SPREAD_ABOVE:
        return "spread"
    return "straight"


def describe_figure(params: FigureParams, kps: KeypointSet, schema: AttributeSchema) -> DescriptionRecord:
    """Derive the description record from pose angles and the visibility mask"""
    derived = {
        "gender": params.gender,
        "head": params.head,
        "body": params.body,
        "right_arm": arm_label(params.right_shoulder, params.right_elbow),
        "left_arm": arm_label(params.left_shoulder, params.left_elbow),
        "right_leg": leg_label(params.right_hip, params.right_knee),
        "left_leg": leg_label(params.left_hip, params.left_knee),
    }
    mask = kps.visibility()
    selections: Dict[str, str] = {}
    flags: Dict[str, Dict[str, bool]] = {}
    for group in schema.groups:
        if group.kind == "multi":
            flags[group.name] = {o: bool(mask[JOINT_INDEX[o]]) for o in group.options}
        elif group.name in derived:
            selections[group.name] = derived[group.name]
    return DescriptionRecord(selections=selections, flags=flags)


def sample_figure(
    rng_seed: int,
    schema: AttributeSchema,
    size: int = 64,
    identity: Optional[Dict[str, object]] = None,
) -> Tuple[FigureParams, KeypointSet, DescriptionRecord]:
    """
    Draw a random pose (and identity, unless one is given) and derive its keypoints and description.

    Args:
        rng_seed: Seed for the pose draw
        schema: Attribute schema; its anatomy section bounds the joint angles
        size: Image side in pixels
        identity: Attributes from sample_identity to keep across poses

    Returns:
        Tuple of (figure params, keypoints, description record)
    """
    rng = np.random.default_rng(rng_seed)
    ranges = _anatomy(schema)
    if identity is None:
        identity = sample_identity(derive_seed(rng_seed, "identity"), size)

    def angle(kind: str) -> float:
        lo, hi = ranges[kind]
        return float(rng.uniform(lo, hi))

    pose = {
        f"{prefix}_{kind}": angle(kind)
        for prefix in ("right", "left")
        for kind in ("shoulder", "elbow", "hip", "knee")
    }
    head_yaw = angle("head_yaw")
    body = ("front", "left", "right")[int(rng.integers(0, 3))]
    params = FigureParams(
        **identity,
        **pose,
        head_yaw=head_yaw,
        body=body,
        head=_head_label(head_yaw),
    )
    kps, _ = figure_keypoints(params, size)
    return params, kps, describe_figure(params, kps, schema)


# ============================================================================
# RENDERING
# ============================================================================

def render_figure(params: FigureParams, size: int) -> np.ndarray:
    """
    Draw a figure as an anti-aliased size x size RGB image.

    The top-left block carries the gender tag (white for woman, black for man).

    Raises:
        TipsValidationError: If size < 32
    """
    if size < 32:
        raise TipsValidationError(f"Figures need at least 32 pixels, got {size}")
    kps, radius = figure_keypoints(params, size)
    xy = kps.xy()
    vis = kps.visibility()
    f = SUPERSAMPLE
    pal = params.palette

    def p(name: str) -> Tuple[float, float]:
        x, y = xy[JOINT_INDEX[name]]
        return ((x + 0.5) * f - 0.5, (y + 0.5) * f - 0.5)

    canvas = Image.new("RGB", (size * f, size * f), pal.background)
    draw = ImageDraw.Draw(canvas)
    width = params.thickness * f

    draw.polygon([p("right_shoulder"), p("left_shoulder"), p("left_hip"), p("right_hip")], fill=pal.top)
    if params.gender == "woman":
        rh, lh = np.array(p("right_hip")), np.array(p("left_hip"))
        flare = np.array([0.06 * params.scale * f, 0.16 * params.scale * f])
        skirt = [tuple(rh), tuple(lh), tuple(lh + flare), tuple(rh + flare * np.array([-1, 1]))]
        draw.polygon(skirt, fill=pal.bottom)

    for prefix in ("right", "left"):
        draw.line([p(f"{prefix}_hip"), p(f"{prefix}_knee"), p(f"{prefix}_ankle")], fill=pal.bottom, width=width, joint="curve")
        draw.line([p(f"{prefix}_shoulder"), p(f"{prefix}_elbow")], fill=pal.top, width=width, joint="curve")
        draw.line([p(f"{prefix}_elbow"), p(f"{prefix}_wrist")], fill=pal.skin, width=width, joint="curve")
    draw.line([p("neck"), p("nose")], fill=pal.skin, width=width)

    nx, ny = p("nose")
    r = radius * f
    draw.ellipse([nx - r, ny - r, nx + r, ny + r], fill=pal.skin)
    dot = 0.5 * f
    for eye in ("right_eye", "left_eye"):
        if vis[JOINT_INDEX[eye]]:
            ex, ey = p(eye)
            draw.ellipse([ex - dot, ey - dot, ex + dot, ey + dot], fill=(40, 30, 30))

    image = np.asarray(canvas.resize((size, size), Image.Resampling.BOX), dtype=np.uint8).copy()
    t = tag_size(size)
    image[:t, :t] = 255 if params.gender == "woman" else 0
    return image


# ============================================================================
# DATASET FILES
# ============================================================================

def _format_keypoint_row(sample_id: str, kps: KeypointSet) -> str:
    xy = kps.xy()
    vis = kps.visibility()
    ys = [str(int(round(y))) if v else "-1" for (_, y), v in zip(xy, vis)]
    xs = [str(int(round(x))) if v else "-1" for (x, _), v in zip(xy, vis)]
    return f"{sample_id}.png: [{', '.join(ys)}]: [{', '.join(xs)}]"


def _parse_keypoint_table(path: Path, size_lookup) -> Dict[str, KeypointSet]:
    table: Dict[str, KeypointSet] = {}
    lines = path.read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [s.strip() for s in line.split(":")]
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 'name: [ys]: [xs]'")
        name = parts[0].rsplit(".", 1)[0]
        try:
            ys = json.loads(parts[1])
            xs = json.loads(parts[2])
        except json.JSONDecodeError as e:
            raise DatasetError(f"{path}:{lineno}: unreadable coordinate list ({e})") from e
        if len(ys) != NUM_JOINTS or len(xs) != NUM_JOINTS:
            raise DatasetError(f"{path}:{lineno}: expected {NUM_JOINTS} coordinates per axis")
        visible = np.array([x != -1 and y != -1 for x, y in zip(xs, ys)])
        xy = np.array([[x, y] if v else [0, 0] for x, y, v in zip(xs, ys, visible)], dtype=np.float64)
        width, height = size_lookup(name)
        table[name] = KeypointSet.from_arrays(xy, visible, width, height)
    return table


def write_annotation_line(sample_id: str, embedding: TextEmbedding, sentence: str) -> str:
    vector = ",".join(str(int(v)) for v in embedding.values)
    return f"{sample_id}\t{vector}\t{sentence}"


def build_dataset(
    n: int,
    seed: int,
    size: int,
    out_dir: Path,
    schema: AttributeSchema,
    test_fraction: float = 1 / 11,
) -> DatasetManifest:
    """
    Generate n samples as pose pairs of shared identities and write them to disk.

    Identity i yields ids "{i:05d}_0" and "{i:05d}_1" (the last identity has a
    single pose when n is odd). Splits are drawn per identity so both poses of
    a person land on the same side.

    Args:
        n: Number of samples
        seed: Dataset seed; every sample derives its own child seed
        size: Image side in pixels
        out_dir: Destination directory
        schema: Attribute schema used for descriptions
        test_fraction: Share of identities held out

    Returns:
        The written DatasetManifest

    Raises:
        DatasetError: If a file cannot be written
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / IMAGES_DIR
    try:
        images_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DatasetError(f"Cannot create dataset directory {images_dir}: {e}") from e

    identities = (n + 1) // 2
    ids: List[str] = []
    pairs: List[Tuple[str, str]] = []
    annotation_lines: List[str] = []
    keypoint_lines = ["name:keypoints_y:keypoints_x"]
    by_identity: Dict[int, List[str]] = {}

    for i in range(identities):
        identity = sample_identity(derive_seed(seed, f"identity-{i}"), size)
        poses = 2 if 2 * i + 1 < n else 1
        for pose in range(poses):
            sample_id = f"{i:05d}_{pose}"
            params, kps, record = sample_figure(derive_seed(seed, f"pose-{i}-{pose}"), schema, size, identity)
            embedding = encode_manyhot(record, schema)
            sentence = render_description_text(record, schema)
            path = images_dir / f"{sample_id}.png"
            try:
                save_png(render_figure(params, size), path)
            except OSError as e:
                raise DatasetError(f"Cannot write {path}: {e}") from e
            ids.append(sample_id)
            by_identity.setdefault(i, []).append(sample_id)
            annotation_lines.append(write_annotation_line(sample_id, embedding, sentence))
            keypoint_lines.append(_format_keypoint_row(sample_id, kps))
        if poses == 2:
            a, b = by_identity[i]
            pairs += [(a, b), (b, a)]

    order = np.random.default_rng(derive_seed(seed, "split")).permutation(identities)
    n_test = int(round(identities * test_fraction))
    test_identities = set(int(i) for i in order[:n_test])
    splits = {
        "train": [sid for i in range(identities) if i not in test_identities for sid in by_identity[i]],
        "test": [sid for i in range(identities) if i in test_identities for sid in by_identity[i]],
    }
    manifest = DatasetManifest(
        format=DATASET_FORMAT,
        seed=seed,
        size=size,
        schema_id=schema.schema_id,
        ids=ids,
        splits=splits,
        pairs=pairs,
    )

    try:
        (out_dir / ANNOTATIONS_FILE).write_text("\n".join(annotation_lines) + "\n", encoding="utf-8")
        (out_dir / KEYPOINTS_FILE).write_text("\n".join(keypoint_lines) + "\n", encoding="utf-8")
        (out_dir / MANIFEST_FILE).write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        save_schema(schema, out_dir / SCHEMA_FILE)
    except OSError as e:
        raise DatasetError(f"Cannot write dataset metadata under {out_dir}: {e}") from e

    logger.info(
        f"Built dataset of {n} samples ({len(splits['train'])} train / {len(splits['test'])} test, "
        f"{len(pairs)} ordered pairs) at {out_dir}"
    )
    return manifest


def load_dfpass(
    annotations_path: Path,
    images_dir: Path,
    schema: AttributeSchema,
    keypoints_path: Optional[Path] = None,
) -> Iterator[PoseSample]:
    """
    Stream samples from a DF-PASS style annotation file.

    Each line is `id<TAB>comma-separated 0/1 vector<TAB>sentence`. Keypoints
    come from a DeepFashion-style table (`keypoints.csv` beside the
    annotations by default) when present. Lines whose vector is malformed are
    skipped and counted.

    Raises:
        DatasetError: If the annotation file, image directory or an image is missing
        SchemaMismatchError: If a vector length differs from the schema's total_dim
    """
    annotations_path = Path(annotations_path)
    images_dir = Path(images_dir)
    if not annotations_path.is_file():
        raise DatasetError(f"Annotation file not found: {annotations_path}")
    if not images_dir.is_dir():
        raise DatasetError(f"Image directory not found: {images_dir}")
    keypoints_path = Path(keypoints_path) if keypoints_path is not None else annotations_path.parent / KEYPOINTS_FILE

    def image_path(sample_id: str) -> Path:
        return images_dir / f"{sample_id}.png"

    def size_of(sample_id: str) -> Tuple[int, int]:
        path = image_path(sample_id)
        if not path.is_file():
            raise DatasetError(f"Image not found: {path}")
        with Image.open(path) as img:
            return img.size

    table = _parse_keypoint_table(keypoints_path, size_of) if keypoints_path.is_file() else {}

    skipped = 0
    with open(annotations_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                skipped += 1
                logger.warning(f"{annotations_path}:{lineno}: expected 3 tab-separated fields, skipping")
                continue
            sample_id, raw_vector, sentence = parts
            tokens = raw_vector.split(",")
            if len(tokens) != schema.total_dim:
                raise SchemaMismatchError(
                    f"{annotations_path}:{lineno}: vector has {len(tokens)} entries, schema total_dim is {schema.total_dim}"
                )
            try:
                values = np.array([float(t) for t in tokens])
                embedding = TextEmbedding(values=values, kind="many_hot", schema_id=schema.schema_id)
                record = decode_manyhot(embedding, schema)
            except (ValueError, MalformedVectorError) as e:
                skipped += 1
                logger.debug(f"{annotations_path}:{lineno}: malformed vector ({e})")
                continue
            path = image_path(sample_id)
            if not path.is_file():
                raise DatasetError(f"Image not found: {path}")
            yield PoseSample(
                sample_id=sample_id,
                image=load_png(path),
                keypoints=table.get(sample_id),
                record=record,
                embedding=embedding,
                sentence=sentence,
            )

    if skipped:
        logger.warning(f"Skipped {skipped} malformed annotation lines in {annotations_path}")


@dataclass
class SynthDataset:
    """A dataset directory loaded into memory"""
    manifest: DatasetManifest
    samples: Dict[str, PoseSample]

    def split(self, name: str) -> List[PoseSample]:
        return [self.samples[sid] for sid in self.manifest.splits.get(name, []) if sid in self.samples]

    def split_pairs(self, name: str) -> List[Tuple[PoseSample, PoseSample]]:
        members = set(self.manifest.splits.get(name, []))
        return [
            (self.samples[a], self.samples[b])
            for a, b in self.manifest.pairs
            if a in members and b in members
        ]


def load_dataset(dataset_dir: Path, schema: AttributeSchema) -> SynthDataset:
    """
    Load a directory written by build_dataset.

    Raises:
        DatasetError: If the manifest is missing or unreadable
        SchemaMismatchError: If the dataset was built with another schema
    """
    dataset_dir = Path(dataset_dir)
    manifest_path = dataset_dir / MANIFEST_FILE
    if not manifest_path.is_file():
        raise DatasetError(f"Dataset manifest not found: {manifest_path}")
    try:
        manifest = DatasetManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    except ValueError as e:
        raise DatasetError(f"Unreadable manifest {manifest_path}: {e}") from e
    if manifest.schema_id != schema.schema_id:
        raise SchemaMismatchError(
            f"Dataset {dataset_dir} was built with schema {manifest.schema_id}, not {schema.schema_id}"
        )
    samples = {
        s.sample_id: s
        for s in load_dfpass(dataset_dir / ANNOTATIONS_FILE, dataset_dir / IMAGES_DIR, schema)
    }
    logger.info(f"Loaded {len(samples)} samples from {dataset_dir}")
    return SynthDataset(manifest=manifest, samples=samples)


def model_image(sample: PoseSample) -> np.ndarray:
    """Sample image as a 3 x S x S float32 array in [-1, 1]"""
    return to_model_range(sample.image)
