"""
Configuration management using Pydantic Settings
"""
from pathlib import Path
from typing import Any, Dict, Optional
from functools import lru_cache

from loguru import logger
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import TipsValidationError
from .schemas import PipelineConfig


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables (TIPS_ prefix)"""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="TIPS_",
        case_sensitive=False,
        extra="ignore",
    )

    # Every command writes below this directory (TIPS_OUT_DIR)
    out_dir: str = "./tips_out"

    # Logging
    log_level: str = "INFO"
    log_to_file: bool = True
    # Rotating log files; defaults to <out_dir>/logs
    log_dir: Optional[str] = None

    # Pose representation defaults; the threshold applies to generated heatmaps
    heatmap_sigma: float = 1.5
    occlusion_threshold: float = 0.2

    # Synthetic data defaults
    image_size: int = 64
    global_seed: int = 0


@lru_cache()
def get_settings() -> Settings:
    """Cached settings singleton"""
    return Settings()


settings = get_settings()


def _coerce_scalar(raw: str) -> Any:
    """Turn a config-file value into bool/int/float/list/str"""
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    lowered = value.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if value.startswith("[") and value.endswith("]"):
        inner = value[1:-1].strip()
        if not inner:
            return []
        return [_coerce_scalar(part) for part in inner.split(",")]
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            continue
    return value


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, Any]:
    """
    Parse flat `key = value` text with dotted sections into a nested dict.

    `[section]` headers prefix the keys that follow them, so
    `[t2p]` + `iterations = 10` and `t2p.iterations = 10` are equivalent.

    Args:
        text: Config file contents
        source: Name used in error messages

    Returns:
        Nested dictionary suitable for PipelineConfig.model_validate

    Raises:
        TipsValidationError: On a line that is neither a header nor an assignment
    """
    tree: Dict[str, Any] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            continue
        if "=" not in stripped:
            raise TipsValidationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = stripped.split("=", 1)
        dotted = f"{section}.{key.strip()}" if section else key.strip()
        node = tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise TipsValidationError(f"{source}:{lineno}: '{part}' is both a value and a section")
        node[parts[-1]] = _coerce_scalar(raw)
    return tree


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(
    path: Optional[Path] = None,
    overrides: Optional[Dict[str, Any]] = None,
) -> PipelineConfig:
    """
    Build the pipeline config from defaults, an optional config file and overrides.

    Precedence: overrides (CLI flags) > config file > TIPS_* environment > defaults.

    Args:
        path: Optional config file
        overrides: Nested dict of values that win over the file

    Returns:
        Validated PipelineConfig with per-stage seeds resolved

    Raises:
        TipsValidationError: If the file is missing or the values do not validate
    """
    data: Dict[str, Any] = {
        "out_dir": settings.out_dir,
        "seed": settings.global_seed,
        "data": {"size": settings.image_size, "heatmap_sigma": settings.heatmap_sigma},
    }
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise TipsValidationError(f"Config file not found: {path}")
        logger.info(f"Loading pipeline config from {path}")
        data = _merge(data, parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    if overrides:
        data = _merge(data, overrides)

    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise TipsValidationError(f"Invalid pipeline config: {e}") from e
    return config.with_derived_seeds()
