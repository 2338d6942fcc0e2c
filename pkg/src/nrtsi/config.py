"""Run configuration: a YAML tree validated strictly against the module configs."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .model import PRESETS, ModelConfig
from .scheduler import Mode, SchedulerConfig
from .synth import BilliardsConfig, MaskPolicy, Sampling, SinusoidConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataSection:
    kind: str = "sinusoid"
    n_test: int = 100             # sinusoid only; billiards has its own split
    mask_min_hidden: int = 90
    mask_max_hidden: int = 90
    mask_mode: str = "points"
    mask_rate: float = 0.5
    mask_seed: int = 12345

    def __post_init__(self):
        if self.kind not in ("sinusoid", "billiards"):
            raise ConfigError(f"data.kind must be 'sinusoid' or 'billiards', got {self.kind!r}")

    @property
    def mask_policy(self) -> MaskPolicy:
        return MaskPolicy(self.mask_min_hidden, self.mask_max_hidden, self.mask_mode, self.mask_rate)


@dataclass(frozen=True)
class ImputeSection:
    n_samples: int | None = None
    dump_plan: bool = True
    input: str = "masked"


@dataclass(frozen=True)
class EvalSection:
    repeats: int = 1
    side: float = 0.8828


@dataclass(frozen=True)
class ExportSection:
    series_index: int = 0
    level: int | None = None
    sample: int | None = None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    run_dir: str | None = None
    data: DataSection = field(default_factory=DataSection)
    sinusoid: SinusoidConfig = field(default_factory=SinusoidConfig)
    billiards: BilliardsConfig = field(default_factory=BilliardsConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    impute: ImputeSection = field(default_factory=ImputeSection)
    eval: EvalSection = field(default_factory=EvalSection)
    export: ExportSection = field(default_factory=ExportSection)

    def param_hash(self) -> str:
        """SHA-256 of the canonical JSON form, excluding the run directory."""
        tree = to_tree(self)
        tree.pop("run_dir", None)
        return hashlib.sha256(json.dumps(tree, sort_keys=True).encode()).hexdigest()


_SECTIONS = {f.name: f for f in fields(RunConfig)}


def _plain(v: Any) -> Any:
    if isinstance(v, (Mode, Sampling)):
        return v.value
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    return v


def to_tree(cfg: RunConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        v = getattr(cfg, name)
        out[name] = ({f.name: _plain(getattr(v, f.name)) for f in fields(v)}
                     if dataclasses.is_dataclass(v) else v)
    return out


def _build(cls, tree: Any, where: str):
    if tree is None:
        return cls()
    if not isinstance(tree, dict):
        raise ConfigError(f"{where} must be a mapping")
    tree = dict(tree)
    base = cls()
    if cls is ModelConfig and "preset" in tree:
        name = tree.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"{where}.preset must be one of {sorted(PRESETS)}, got {name!r}")
        base = PRESETS[name]
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    for k, v in tree.items():
        if isinstance(v, list):
            tree[k] = tuple(v)
    try:
        return dataclasses.replace(base, **tree)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def from_tree(tree: dict | None) -> RunConfig:
    tree = dict(tree or {})
    unknown = sorted(set(tree) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    kw = {}
    for name, v in tree.items():
        ftype = _SECTIONS[name].default_factory if _SECTIONS[name].default_factory is not dataclasses.MISSING else None
        kw[name] = _build(ftype, v, name) if ftype is not None else v
    cfg = RunConfig(**kw)
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    return cfg


def load_config(path) -> RunConfig:
    try:
        tree = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if tree is not None and not isinstance(tree, dict):
        raise ConfigError("config root must be a mapping")
    return from_tree(tree)
