"""Experiment configuration: YAML schema, validation and bundled presets."""

from __future__ import annotations

import copy
import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from .cmm import CMMParams
from .explorer import ExplorerParams
from .scene import ConfigError, ObjectSpec, PoseJitter, SceneConfig, TableSpec
from .supervoxel import SupervoxelParams

PRESETS = ("balls-on-table", "bricks-on-table", "bricks-fixed-spheres", "white-balls", "white-bricks")
DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    supervoxel: SupervoxelParams = field(default_factory=SupervoxelParams)
    cmm: CMMParams = field(default_factory=CMMParams)
    explorer: ExplorerParams = field(default_factory=ExplorerParams)
    budget: int = 400
    replications: int = 1
    master_seed: int = 0
    disable_split_merge: bool = False
    alpha_sweep: list = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    output_dir: str = "runs"
    workers: int = 1
    # number of distinct training poses cycled through (0: a fresh pose every iteration)
    scene_pool: int = 0
    checkpoint_every: int = 50
    name: str = "experiment"

    def validate(self) -> "ExperimentConfig":
        if self.budget < 1:
            raise ConfigError("experiment.budget must be >= 1")
        if self.replications < 1:
            raise ConfigError("experiment.replications must be >= 1")
        if self.workers < 1:
            raise ConfigError("experiment.workers must be >= 1")
        if self.scene_pool < 0:
            raise ConfigError("experiment.scene_pool must be >= 0")
        if self.checkpoint_every < 1:
            raise ConfigError("experiment.checkpoint_every must be >= 1")
        for a in self.alpha_sweep:
            if not 0 < a <= 1:
                raise ConfigError(f"experiment.alpha_sweep value {a} must be in (0, 1]")
        self.supervoxel.validate()
        self.cmm.validate()
        self.explorer.validate()
        self.scene.validate(self.supervoxel.seed_radius)
        return self

    def effective_cmm(self) -> CMMParams:
        params = copy.copy(self.cmm)
        if self.disable_split_merge:
            params.split_merge = False
        return params

    def to_dict(self) -> dict:
        return _plain(self)


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "tolist"):
        return obj.tolist()
    return obj


def _build(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{where}.{key}: unknown field")
        kwargs[key] = _coerce(cls, names[key], value, f"{where}.{key}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


_NESTED = {
    (SceneConfig, "table"): TableSpec,
    (SceneConfig, "pose_jitter"): PoseJitter,
    (ExperimentConfig, "scene"): SceneConfig,
    (ExperimentConfig, "supervoxel"): SupervoxelParams,
    (ExperimentConfig, "cmm"): CMMParams,
    (ExperimentConfig, "explorer"): ExplorerParams,
}


def _coerce(cls, f, value, where):
    nested = _NESTED.get((cls, f.name))
    if nested is not None:
        return _build(nested, value, where)
    if cls is SceneConfig and f.name == "objects":
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_build(ObjectSpec, v, f"{where}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, list):
        return tuple(value) if f.name != "alpha_sweep" else list(value)
    default = f.default if f.default is not dataclasses.MISSING else None
    if isinstance(default, bool) and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true or false")
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        if isinstance(default, int) and isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"{where}: expected an integer, got {value!r}")
            value = int(value)
        if isinstance(default, float):
            value = float(value)
    return value


def from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from a parsed mapping."""
    return _build(ExperimentConfig, data or {}, "experiment").validate()


def load_config(path) -> ExperimentConfig:
    """Read a YAML config file, or a bundled preset when ``path`` names one."""
    text = preset_text(path) if str(path) in PRESETS else Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return from_dict(data)


def preset_text(name: str) -> str:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose one of {', '.join(PRESETS)}")
    return resources.files("cmmexplore").joinpath("presets", f"{name}.yaml").read_text()


def load_preset(name: str) -> ExperimentConfig:
    return load_config(name)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def apply_overrides(cfg: ExperimentConfig, overrides: dict) -> ExperimentConfig:
    """Set dotted keys (``"cmm.alpha"``) on a copy of ``cfg`` and revalidate."""
    data = cfg.to_dict()
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(f"{key}: unknown field")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"{key}: unknown field")
        node[parts[-1]] = value
    return from_dict(data)


def with_name(cfg: ExperimentConfig, name: Optional[str]) -> ExperimentConfig:
    if name:
        cfg.name = name
    return cfg
