"""Experiment configuration: strict parse, lossless round trip.

Configs are JSON documents. Unknown keys are errors, not warnings; a
silently ignored typo in a loss hyperparameter is the easiest way to
corrupt an experiment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .guidance import GuidanceSpec


@dataclass
class ScheduleSpec:
    max_steps_down: int = 2
    decay_factor: float = 0.3
    patience: int = 5

    def __post_init__(self):
        if self.max_steps_down < 0 or self.patience < 1:
            raise ConfigError("max_steps_down >= 0 and patience >= 1 required")
        if not 0 < self.decay_factor < 1:
            raise ConfigError("decay_factor must lie in (0, 1)")


@dataclass
class TrainConfig:
    base_loss: str = "multisimilarity"      # contrastive | multisimilarity | margin
    base_params: dict = field(default_factory=dict)
    guidance: GuidanceSpec = field(default_factory=GuidanceSpec)
    lr: float = 1e-5
    weight_decay: float = 3e-4
    batch_size: int = 32
    samples_per_class: int = 2
    epochs: int = 50
    seed: int = 0
    val_fraction: float = 0.15
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    embed_dim: int = 32
    hidden: bool = False                    # one hidden layer (2x input width)
    dtype: str = "float32"

    def __post_init__(self):
        if self.base_loss not in ("contrastive", "multisimilarity", "margin"):
            raise ConfigError(f"unknown base_loss {self.base_loss!r}")
        if self.batch_size % self.samples_per_class != 0:
            raise ConfigError("batch_size must be divisible by samples_per_class")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must lie in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if self.lr < 0 or self.weight_decay < 0 or self.epochs < 1:
            raise ConfigError("need lr >= 0, weight_decay >= 0, epochs >= 1")


def _build(cls, data: dict, path: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {path}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad {path}: {e}") from e


def config_from_dict(data: dict) -> TrainConfig:
    data = dict(data)
    if "guidance" in data:
        data["guidance"] = _build(GuidanceSpec, dict(data["guidance"]), "guidance")
    if "schedule" in data:
        data["schedule"] = _build(ScheduleSpec, dict(data["schedule"]), "schedule")
    return _build(TrainConfig, data, "config")


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)


def dumps_config(cfg: TrainConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def loads_config(text: str) -> TrainConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config document must be a JSON object")
    return config_from_dict(data)


def load_config(path) -> TrainConfig:
    with open(path, encoding="utf-8") as f:
        return loads_config(f.read())
