"""Pipeline configuration and the flat key-value config file format."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

from .errors import FormatError, ValidationError

# Candidate pool handed to ANMS, as a multiple of the selection target.
POOL_FACTOR = 4


@dataclass(frozen=True)
class RansacConfig:
    reproj_threshold: float = 2.0
    confidence: float = 0.99
    max_iterations: int = 500
    min_inliers: int = 15

    def __post_init__(self):
        if self.reproj_threshold <= 0:
            raise ValidationError(f"reproj_threshold must be > 0, got {self.reproj_threshold}")
        if not (0.0 < self.confidence < 1.0):
            raise ValidationError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.max_iterations <= 0 or self.min_inliers <= 0:
            raise ValidationError("max_iterations and min_inliers must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    anms_n: int = 1000
    ratio: float = 0.7
    mutual: bool = True
    max_depth: float = 20.0
    epipolar_tolerance: float = 2.0
    ransac: RansacConfig = field(default_factory=RansacConfig)
    keyframe_min_tracked: int = 50
    keyframe_max_gap: int = 10

    def __post_init__(self):
        if self.anms_n <= 0:
            raise ValidationError(f"anms_n must be positive, got {self.anms_n}")
        if not (0.0 < self.ratio <= 1.0):
            raise ValidationError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.max_depth <= 0 or self.epipolar_tolerance <= 0:
            raise ValidationError("max_depth and epipolar_tolerance must be positive")
        if self.keyframe_min_tracked <= 0 or self.keyframe_max_gap <= 0:
            raise ValidationError("keyframe thresholds must be positive")


_INT_KEYS = {"anms_n", "keyframe_min_tracked", "keyframe_max_gap", "max_iterations", "min_inliers"}
_FLOAT_KEYS = {"ratio", "max_depth", "epipolar_tolerance", "reproj_threshold", "confidence"}
_BOOL_KEYS = {"mutual"}
_RANSAC_KEYS = {f.name for f in fields(RansacConfig)}


def parse_config_text(text: str, path=None) -> tuple[PipelineConfig, int]:
    """Parse the flat `key = value` config format.

    Keys mirror PipelineConfig fields (RANSAC fields are flattened in) plus
    `seed`. Unknown keys are rejected so typos cannot silently fall back to
    defaults. Returns (config, seed).
    """
    plain: dict = {}
    ransac: dict = {}
    seed = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"expected 'key = value', got {raw!r}", path=path, line=lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        try:
            if key == "seed":
                seed = int(value)
            elif key in _BOOL_KEYS:
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(value)
                plain[key] = value.lower() in ("true", "1")
            elif key in _INT_KEYS:
                (ransac if key in _RANSAC_KEYS else plain)[key] = int(value)
            elif key in _FLOAT_KEYS:
                (ransac if key in _RANSAC_KEYS else plain)[key] = float(value)
            else:
                raise FormatError(f"unknown config key {key!r}", path=path, line=lineno)
        except ValueError:
            raise FormatError(f"bad value for {key!r}: {value!r}", path=path, line=lineno) from None
    cfg = PipelineConfig(**plain)
    if ransac:
        cfg = replace(cfg, ransac=replace(cfg.ransac, **ransac))
    return cfg, seed


def load_config_file(path) -> tuple[PipelineConfig, int]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), path=path)
