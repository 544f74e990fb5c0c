"""Experiment configuration from TOML or JSON files.

Example (TOML)::

    train_corpus = "corpora/near_far/train.jsonl"
    test_corpus = "corpora/near_far/test.jsonl"
    target = "tgt"
    sizes = [10, 20, 40]
    seeds = [0, 1, 2]

    [model]
    hidden_dim = 16
    embed_dim = 16

    [flip]
    source = "far"

Relative paths, including the default ``out_dir = "runs"``, are resolved
against the directory of the config file.
"""

from __future__ import annotations

import dataclasses
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..errors import ConfigError
from ..model.train import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULT_FRACTIONS = (0.05, 0.10, 0.15, 0.20, 0.25)


@dataclass(frozen=True)
class ModelSettings:
    hidden_dim: int = 200
    embed_dim: int = 100
    max_decode_len: int = 100
    init_range: float = 1.0
    reg_weight: float = 0.5
    decoder_reg: str = "mean"


@dataclass(frozen=True)
class SolverSettings:
    damping: float = 0.01
    tol: float = 1e-6
    max_iter: int = 1000

    def __post_init__(self):
        if self.damping < 0 or self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("solver needs damping >= 0, tol > 0 and max_iter >= 1")


@dataclass(frozen=True)
class FlipSettings:
    source: str | None = None
    fractions: tuple[float, ...] = DEFAULT_FRACTIONS
    size: int | None = None  # examples per domain; None uses the whole pool
    validation: bool = False

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if not self.fractions or any(not 0 < f <= 1 for f in self.fractions):
            raise ConfigError("flip fractions must lie in (0, 1]")


@dataclass(frozen=True)
class AugmentSettings:
    source: str | None = None
    draws: int = 100
    sizes: tuple[int, ...] = (10, 20, 30, 40)

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.draws < 1:
            raise ConfigError("augment.draws must be >= 1")
        _check_sizes(self.sizes, "augment.sizes")


def _check_sizes(sizes, name: str) -> None:
    if not sizes:
        raise ConfigError(f"{name} must not be empty")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"{name} must be positive")
    if list(sizes) != sorted(set(sizes)):
        raise ConfigError(f"{name} must be strictly ascending")


@dataclass(frozen=True)
class ExperimentConfig:
    train_corpus: Path
    test_corpus: Path
    target: str
    domains: tuple[str, ...] | None = None
    sizes: tuple[int, ...] = tuple(range(10, 101, 10))
    seeds: tuple[int, ...] = (0,)
    loo_size: int = 100
    out_dir: Path = Path("runs")
    executor: str | None = None
    executor_timeout: float = 10.0
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    solver: SolverSettings = field(default_factory=SolverSettings)
    flip: FlipSettings = field(default_factory=FlipSettings)
    augment: AugmentSettings = field(default_factory=AugmentSettings)

    def __post_init__(self):
        object.__setattr__(self, "train_corpus", Path(self.train_corpus))
        object.__setattr__(self, "test_corpus", Path(self.test_corpus))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.domains is not None:
            object.__setattr__(self, "domains", tuple(self.domains))
            if self.target not in self.domains:
                raise ConfigError(f"target {self.target!r} is not among the configured domains")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        _check_sizes(self.sizes, "sizes")
        if self.loo_size < 1:
            raise ConfigError("loo_size must be positive")

    def with_overrides(self, seed: int | None = None, out_dir: str | Path | None = None) -> "ExperimentConfig":
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seeds"] = (seed,)
        if out_dir is not None:
            changes["out_dir"] = Path(out_dir)
        return dataclasses.replace(self, **changes)

    def to_json(self) -> dict:
        def conv(obj):
            if isinstance(obj, Path):
                return str(obj)
            if isinstance(obj, tuple):
                return [conv(v) for v in obj]
            if isinstance(obj, dict):
                return {k: conv(v) for k, v in obj.items()}
            return obj

        return conv(dataclasses.asdict(self))


_SECTIONS = {
    "model": ModelSettings,
    "train": TrainConfig,
    "solver": SolverSettings,
    "flip": FlipSettings,
    "augment": AugmentSettings,
}


def _build(cls, data: Mapping, where: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where} must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_mapping(data: Mapping, base_dir: str | Path = ".") -> ExperimentConfig:
    data = dict(data)
    for name, cls in _SECTIONS.items():
        if name in data:
            data[name] = _build(cls, data[name], f"[{name}]")
    for key in ("sizes", "seeds", "domains"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    base = Path(base_dir)
    data.setdefault("out_dir", "runs")
    for key in ("train_corpus", "test_corpus", "out_dir"):
        if key in data:
            p = Path(data[key])
            data[key] = p if p.is_absolute() else base / p
    for key in ("train_corpus", "test_corpus", "target"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
    return _build(ExperimentConfig, data, "config")


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        elif path.suffix.lower() == ".json":
            data = json.loads(raw)
        else:
            raise ConfigError(f"config must be .toml or .json, got {path.name}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_mapping(data, base_dir=path.parent)
