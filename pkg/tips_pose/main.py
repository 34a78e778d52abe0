"""
Command-line entry point with per-command logging
"""
import argparse
import json
import sys
import time
import uuid
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from .config import load_pipeline_config, settings
from .errors import TipsError, TipsValidationError
from .schemas import HeatmapSpec, PipelineConfig
from .services.checkpoints import load_checkpoint, save_checkpoint
from .services.checkpoints.models import STAGE_GENDER
from .services.evaluation import evaluate, gender_label
from .services.metrics import TagOracleClassifier, gender_classifier_from_checkpoint, train_gender_classifier
from .services.refiner import facial_dataset, train_refiner
from .services.render import (
    PipelineCheckpoints,
    RandomConvFeatureExtractor,
    RenderPair,
    RenderPairDataset,
    VGGFeatureExtractor,
    infer_pipeline,
    interpolation_demo,
    train_render,
)
from .services.synth_data import (
    DatasetError,
    SynthDataset,
    build_dataset,
    load_dataset,
    model_image,
    tag_size,
)
from .services.text2pose import HeatmapEmbeddingDataset, train_t2p
from .services.text_encode import AttributeSchema, load_schema, parse_description_text
from .utils.imaging import from_model_range, load_png, save_png, to_model_range
from .utils.report import format_report
from .utils.seeding import derive_seed


MODE_ALIASES = {
    "partial": "partial",
    "partially-text": "partial",
    "full": "full",
    "fully-text": "full",
}

CHECKPOINT_FILES = {"t2p": "t2p.ckpt", "refiner": "refiner.ckpt", "render": "render.ckpt", "gender": "gender.ckpt"}


class UsageError(TipsError):
    """Raised for malformed command lines"""
    pass


class TipsArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting"""

    def error(self, message: str) -> None:
        raise UsageError(message)


# ============================================================================
# PARSER
# ============================================================================

def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="Pipeline config file (key = value)")
    parser.add_argument("--seed", type=int, help="Global seed")
    parser.add_argument("--out", type=Path, help="Output directory (default: TIPS_OUT_DIR)")
    parser.add_argument("--schema", type=Path, help="Attribute schema JSON")
    parser.add_argument("--dataset", type=Path, help="Dataset directory (default: <out>/dataset)")


def build_parser() -> TipsArgumentParser:
    parser = TipsArgumentParser(prog="tips", description="Text-induced pose synthesis pipeline")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("synth-data", help="Generate the synthetic stick-figure dataset")
    _common(p)
    p.add_argument("--count", type=int, help="Number of samples")
    p.add_argument("--size", type=int, help="Image side in pixels")

    for name, help_text in (
        ("train-t2p", "Train the text-to-heatmap GAN"),
        ("train-refiner", "Train the facial keypoint refiner"),
        ("train-render", "Train the attention-gated renderer"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common(p)
        p.add_argument("--steps", type=int, help="Iterations (epochs for the refiner)")
        if name == "train-render":
            p.add_argument("--extractor", choices=("random", "vgg", "none"), default="random",
                           help="Perceptual feature extractor")
            p.add_argument("--attention", choices=("multi", "single"), help="Attention-gate layout")

    p = sub.add_parser("infer", help="Render a source person in a described target pose")
    _common(p)
    p.add_argument("--source", required=True, help="Dataset id of the source image/pose")
    target = p.add_mutually_exclusive_group(required=True)
    target.add_argument("--target", help="Dataset id whose description is the target")
    target.add_argument("--target-text", help="Target description sentence")
    p.add_argument("--mode", choices=sorted(MODE_ALIASES), default="partial")
    p.add_argument("--no-refine", action="store_true", help="Skip facial refinement")
    p.add_argument("--image", type=Path, help="Use this PNG instead of the source sample's image")

    p = sub.add_parser("eval", help="Evaluate on the test split")
    _common(p)
    p.add_argument("--real-only", action="store_true", help="Only score ground truth against itself")
    p.add_argument("--classifier", choices=("oracle", "toy"), default="oracle", help="Gender classifier for GCR")
    p.add_argument("--limit", type=int, help="Evaluate at most this many pairs")

    p = sub.add_parser("interp-demo", help="Interpolate between two target descriptions")
    _common(p)
    p.add_argument("--source", required=True, help="Dataset id of the source image")
    p.add_argument("--start", required=True, help="Dataset id of the starting description")
    p.add_argument("--end", required=True, help="Dataset id of the ending description")
    p.add_argument("--steps", type=int, default=5)
    return parser


# ============================================================================
# HELPERS
# ============================================================================

def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = str(args.out)
    if args.schema is not None:
        overrides["schema_path"] = str(args.schema)
    if args.dataset is not None:
        overrides["dataset_dir"] = str(args.dataset)
    steps = getattr(args, "steps", None)
    if steps is not None:
        key = {"train-t2p": ("t2p", "iterations"), "train-refiner": ("refiner", "epochs"),
               "train-render": ("render", "iterations")}.get(args.command)
        if key:
            overrides.setdefault(key[0], {})[key[1]] = steps
    if getattr(args, "count", None) is not None:
        overrides.setdefault("data", {})["count"] = args.count
    if getattr(args, "size", None) is not None:
        overrides.setdefault("data", {})["size"] = args.size
    if getattr(args, "attention", None) is not None:
        overrides.setdefault("renderer", {})["attention"] = args.attention
    return overrides


def _dataset_dir(cfg: PipelineConfig) -> Path:
    return Path(cfg.dataset_dir) if cfg.dataset_dir else Path(cfg.out_dir) / "dataset"


def _checkpoint_path(cfg: PipelineConfig, stage: str) -> Path:
    return Path(cfg.out_dir) / "checkpoints" / CHECKPOINT_FILES[stage]


def _load_data(cfg: PipelineConfig, schema: AttributeSchema) -> SynthDataset:
    path = _dataset_dir(cfg)
    if not path.is_dir():
        raise DatasetError(f"Dataset directory not found: {path} (run synth-data first)")
    return load_dataset(path, schema)


def _sample(ds: SynthDataset, sample_id: str):
    if sample_id not in ds.samples:
        raise TipsValidationError(f"Unknown sample id '{sample_id}'")
    return ds.samples[sample_id]


def _pipeline(cfg: PipelineConfig) -> PipelineCheckpoints:
    return PipelineCheckpoints.load(
        _checkpoint_path(cfg, "t2p"),
        _checkpoint_path(cfg, "refiner"),
        _checkpoint_path(cfg, "render"),
        heatmap_sigma=cfg.data.heatmap_sigma,
        occlusion_threshold=settings.occlusion_threshold,
    )


def _keypoints_json(kps) -> List[Optional[List[float]]]:
    return [[j.x, j.y] if j.visible else None for j in kps.joints]


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_synth_data(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    out = _dataset_dir(cfg)
    manifest = build_dataset(cfg.data.count, cfg.seed, cfg.data.size, out, schema, cfg.data.test_fraction)
    print(f"Wrote {len(manifest.ids)} samples to {out}")
    return 0


def cmd_train_t2p(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    train = [s for s in ds.split("train") if s.keypoints is not None]
    size = ds.manifest.size
    out = cfg.generator.out_size
    spec = HeatmapSpec(height=out, width=out, sigma=cfg.data.heatmap_sigma)
    dataset = HeatmapEmbeddingDataset(
        [s.keypoints for s in train],
        [s.embedding for s in train],
        spec,
    )
    if size != out:
        logger.info(f"Keypoints in a {size}x{size} frame are rescaled to {out}x{out} heatmaps")
    result = train_t2p(
        dataset,
        cfg.t2p,
        cfg.generator.model_copy(update={"embed_dim": schema.total_dim}),
        cfg.critic.model_copy(update={"embed_dim": schema.total_dim}),
    )
    save_checkpoint(result.checkpoint, _checkpoint_path(cfg, "t2p"))
    result.trace.write_csv(Path(cfg.out_dir) / "traces" / "t2p.csv")
    return 0


def cmd_train_refiner(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    vectors = facial_dataset([s.keypoints for s in ds.split("train") if s.keypoints is not None])
    result = train_refiner(vectors, cfg.refiner)
    save_checkpoint(result.checkpoint, _checkpoint_path(cfg, "refiner"))
    result.trace.write_csv(Path(cfg.out_dir) / "traces" / "refiner.csv")
    return 0


def cmd_train_render(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    pairs = [
        RenderPair(model_image(a), a.keypoints, model_image(b), b.keypoints)
        for a, b in ds.split_pairs("train")
        if a.keypoints is not None and b.keypoints is not None
    ]
    dataset = RenderPairDataset(pairs, cfg.data.heatmap_sigma)
    if args.extractor == "vgg":
        extractor = VGGFeatureExtractor()
    elif args.extractor == "random":
        extractor = RandomConvFeatureExtractor(seed=derive_seed(cfg.seed, "extractor"))
    else:
        extractor = None
    result = train_render(
        dataset,
        cfg.render,
        extractor,
        cfg.renderer.model_copy(update={"image_size": dataset.size}),
        cfg.discriminator,
    )
    save_checkpoint(result.checkpoint, _checkpoint_path(cfg, "render"))
    result.trace.write_csv(Path(cfg.out_dir) / "traces" / "render.csv")
    return 0


def cmd_infer(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    checkpoints = _pipeline(cfg)
    source = _sample(ds, args.source)
    image = to_model_range(load_png(args.image)) if args.image else model_image(source)
    if args.target_text:
        target_record = parse_description_text(args.target_text, schema)
        target_name = "text"
    else:
        target_record = _sample(ds, args.target).record
        target_name = args.target
    mode = MODE_ALIASES[args.mode]
    if mode == "partial" and source.keypoints is None:
        raise TipsValidationError(f"Sample '{args.source}' has no keypoints; use --mode full")
    source_pose = source.keypoints if mode == "partial" else source.record

    result = infer_pipeline(
        image, source_pose, target_record, checkpoints,
        noise_seed=cfg.seed, refine=not args.no_refine, schema=schema,
    )
    out_dir = Path(cfg.out_dir) / "infer"
    stem = f"{args.source}_to_{target_name}_{mode}{'_norefine' if args.no_refine else ''}"
    save_png(from_model_range(result.image), out_dir / f"{stem}.png")
    (out_dir / f"{stem}.json").write_text(json.dumps({
        "mode": mode,
        "refine": not args.no_refine,
        "noise_seed": cfg.seed,
        "source_keypoints": _keypoints_json(result.source_keypoints),
        "target_keypoints_raw": _keypoints_json(result.target_keypoints_raw),
        "target_keypoints": _keypoints_json(result.target_keypoints),
        "refinement_skipped": result.refinement_skipped,
        "attention_levels": sorted(result.attention_maps),
    }, indent=2), encoding="utf-8")
    print(f"Wrote {out_dir / (stem + '.png')}")
    return 0


def cmd_eval(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    pairs = ds.split_pairs("test")
    if args.limit is not None:
        pairs = pairs[:args.limit]
    if args.classifier == "toy":
        path = _checkpoint_path(cfg, "gender")
        if path.is_file():
            classifier = gender_classifier_from_checkpoint(load_checkpoint(path, expected_stage=STAGE_GENDER))
        else:
            train = ds.split("train")
            result = train_gender_classifier(
                [s.image for s in train],
                [gender_label(s) for s in train],
                cfg.gender,
            )
            save_checkpoint(result.checkpoint, path)
            classifier = result.classifier
    else:
        classifier = TagOracleClassifier(block=tag_size(ds.manifest.size))

    checkpoints = None if args.real_only else _pipeline(cfg)
    rows = evaluate(pairs, classifier, checkpoints, schema, noise_seed=cfg.seed)
    report = format_report(rows)
    path = Path(cfg.out_dir) / "eval" / "report.txt"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report, encoding="utf-8")
    print(report, end="")
    return 0


def cmd_interp_demo(args: argparse.Namespace, cfg: PipelineConfig, schema: AttributeSchema) -> int:
    ds = _load_data(cfg, schema)
    checkpoints = _pipeline(cfg)
    source = _sample(ds, args.source)
    results = interpolation_demo(
        model_image(source),
        _sample(ds, args.start).record,
        _sample(ds, args.end).record,
        args.steps,
        checkpoints,
        schema=schema,
        noise_seed=cfg.seed,
    )
    out_dir = Path(cfg.out_dir) / "interp"
    frames = [from_model_range(r.image) for r in results]
    for i, frame in enumerate(frames):
        save_png(frame, out_dir / f"step_{i:02d}.png")
    save_png(np.concatenate(frames, axis=1), out_dir / "strip.png")
    print(f"Wrote {len(frames)} frames to {out_dir}")
    return 0


HANDLERS: Dict[str, Callable[[argparse.Namespace, PipelineConfig, AttributeSchema], int]] = {
    "synth-data": cmd_synth_data,
    "train-t2p": cmd_train_t2p,
    "train-refiner": cmd_train_refiner,
    "train-render": cmd_train_render,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "interp-demo": cmd_interp_demo,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def configure_logging(out_dir: Path) -> List[int]:
    """Stderr sink at the configured level plus a rotating file under the log directory"""
    logger.remove()
    sinks = [logger.add(sys.stderr, level=settings.log_level)]
    if settings.log_to_file:
        sinks.append(logger.add(
            str(Path(settings.log_dir or Path(out_dir) / "logs") / "tips_{time}.log"),
            rotation="1 day",
            retention="7 days",
            level="INFO",
        ))
    return sinks


def run_command(argv: Sequence[str]) -> int:
    """
    Parse argv and run one command.

    Returns:
        0 on success, 1 on a usage error, 2 on a runtime failure
    """
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(list(argv))
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"tips: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    run_id = str(uuid.uuid4())[:8]
    sinks: List[int] = []
    start_time = time.time()
    try:
        cfg = load_pipeline_config(args.config, _overrides(args))
        sinks = configure_logging(Path(cfg.out_dir))
        logger.info(f"[{run_id}] {args.command} (seed {cfg.seed}, out {cfg.out_dir})")
        schema = load_schema(Path(cfg.schema_path) if cfg.schema_path else None)
        code = HANDLERS[args.command](args, cfg, schema)
        logger.info(f"[{run_id}] Completed {args.command} in {time.time() - start_time:.3f}s")
        return code
    except (TipsError, OSError) as e:
        logger.error(f"[{run_id}] {args.command} failed: {e}")
        return 2
    finally:
        for sink in sinks:
            logger.remove(sink)
