"""Pipeline configuration loaded from a JSON file.

Every section is optional; omitted keys take their defaults and unknown
keys are rejected. :func:`config_to_dict` returns the fully resolved
configuration, which each subcommand records in its manifest.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from egoctl.clipper import DEFAULT_THRESHOLDS
from egoctl.conditioning import OcclusionParams
from egoctl.geoembed import EncodingSpec
from egoctl.tracking import TrackerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GridConfig:
    scale: float = 8.0
    sigma: float = 1.5


@dataclass(frozen=True)
class EmbedConfig:
    n_max: int = 42
    id_dim: int = 16
    geo_dim: int = 32
    hidden: int = 32
    out_channels: int = 16
    kernel: tuple[int, int, int] = (3, 3, 3)
    seed: int = 0


@dataclass(frozen=True)
class ClipConfig:
    thresholds: tuple[int, ...] = DEFAULT_THRESHOLDS
    window: int = 5
    multi: bool = False


@dataclass(frozen=True)
class MetricConfig:
    align: bool = True
    # "frame-hand": one alignment per frame and hand; "sequence": one per hand over all frames
    pa_mode: str = "frame-hand"

    def __post_init__(self):
        if self.pa_mode not in ("frame-hand", "sequence"):
            raise ConfigError(f"pa_mode must be 'frame-hand' or 'sequence', got {self.pa_mode!r}")


@dataclass(frozen=True)
class MaskConfig:
    rate: float = 0.05
    per_frame: bool = False


@dataclass(frozen=True)
class CalibConfig:
    angle_bound: float = 0.5
    translation_bound: float = 0.3
    nominal: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    # "platform": one extrinsic for all annotations; "scene": one per scene tag
    grouping: str = "platform"


@dataclass(frozen=True)
class PipelineConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    occlusion: OcclusionParams = field(default_factory=OcclusionParams)
    encoding: EncodingSpec = field(default_factory=EncodingSpec)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    clip: ClipConfig = field(default_factory=ClipConfig)
    metrics: MetricConfig = field(default_factory=MetricConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    calibration: CalibConfig = field(default_factory=CalibConfig)


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in {path or 'config'}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = fields[name].default_factory() if fields[name].default_factory is not dataclasses.MISSING else fields[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}" if path else name)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or 'config'}: {e}") from None


def config_from_dict(data: dict | None) -> PipelineConfig:
    return _build(PipelineConfig, data or {}, "")


def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(data)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = config_to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def with_overrides(cfg: PipelineConfig, **sections) -> PipelineConfig:
    """Replace fields section-wise, e.g. ``with_overrides(cfg, mask={"rate": 0.1})``."""
    changes = {}
    for name, values in sections.items():
        values = {k: v for k, v in values.items() if v is not None}
        if values:
            changes[name] = dataclasses.replace(getattr(cfg, name), **values)
    return dataclasses.replace(cfg, **changes)

