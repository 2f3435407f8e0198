"""Run configuration: a TOML file of sections mirroring the dataclass configs.

Unknown sections or keys are rejected; command-line flags override file values.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from .encoders import EncoderSpec
from .errors import ConfigError, InvalidInput
from .pipeline import HeadConfig, TrainConfig
from .renderer import RenderConfig
from .views import CORNER_ELEVATION, ViewSet, orthogonal_views, spherical_views


@dataclass(frozen=True)
class DataConfig:
    seed: int = 0
    classes: int = 8
    per_class: int = 250
    test_per_class: int = 50


@dataclass(frozen=True)
class ViewConfig:
    pretrain: str = "sph10"
    zeroshot: str = "orth6"
    head: str = "sph10"
    corner_elevation: float = CORNER_ELEVATION

    def build(self, which: str) -> ViewSet:
        name = getattr(self, which)
        if name in ("orth6", "orthogonal6"):
            return orthogonal_views()
        if name in ("sph10", "spherical10"):
            return spherical_views(corner_elevation=self.corner_elevation)
        raise ConfigError(f"unknown view set {name!r} for {which}")


@dataclass(frozen=True)
class RunConfig:
    render: RenderConfig = field(default_factory=RenderConfig)
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    data: DataConfig = field(default_factory=DataConfig)
    views: ViewConfig = field(default_factory=ViewConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def override(self, section: str, **values) -> RunConfig:
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return _apply(self, {section: values})


def _coerce(value, current, key):
    if key == "head.k_shot" and value == "full":
        return None
    if isinstance(current, bool) or isinstance(value, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean")
        return value
    if isinstance(current, int) and isinstance(value, int):
        return value
    if isinstance(current, float) and isinstance(value, (int, float)):
        return float(value)
    return value


def _apply(cfg: RunConfig, doc: dict) -> RunConfig:
    sections = {}
    for name, values in doc.items():
        if name not in {f.name for f in dataclasses.fields(RunConfig)}:
            raise ConfigError(f"unknown config section [{name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"[{name}] must be a table")
        current = getattr(cfg, name)
        allowed = {f.name for f in dataclasses.fields(current)}
        unknown = set(values) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {sorted(unknown)}")
        fixed = {k: _coerce(v, getattr(current, k), f"{name}.{k}") for k, v in values.items()}
        try:
            sections[name] = dataclasses.replace(current, **fixed)
        except (InvalidInput, TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from exc
    return dataclasses.replace(cfg, **sections)


def load_config(path=None) -> RunConfig:
    cfg = RunConfig()
    if path is None:
        return cfg
    try:
        doc = tomli.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for section in doc.values():
        if isinstance(section, dict):
            for k, v in section.items():
                if isinstance(v, float) and not math.isfinite(v):
                    raise ConfigError(f"{k} must be finite")
    return _apply(cfg, doc)
