"""Experiment documents: model, loss weights, optimizer, training and data settings."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigurationError
from .learning import LossWeights
from .observer import ObserverConfig

PRESETS = ("taxibj-like", "mnist-like", "cikm-like", "taxibj-like-desk", "mnist-like-desk", "cikm-like-desk")


def _strict(section: str, d: dict, allowed) -> dict:
    if not isinstance(d, dict):
        raise ConfigurationError(f"{section} must be a JSON object")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown keys in {section}: {unknown}")
    return d


@dataclass(frozen=True)
class OptimizerSettings:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainingSettings:
    batch_size: int = 16
    epochs: int = 1

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigurationError("batch_size must be >= 1 and epochs >= 0")


@dataclass(frozen=True)
class DataSettings:
    """Dataset file paths plus the sample counts (train, val, test) they hold
    or that ``generate`` should produce. ``kind`` picks the synthetic generator."""

    train: str = ""
    val: str = ""
    test: str = ""
    counts: tuple[int, int, int] = (0, 0, 0)
    kind: str = "blobs"
    seq_len: int = 0
    generator_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) != 3 or min(self.counts) < 0:
            raise ConfigurationError(f"counts must be three nonnegative integers, got {self.counts}")
        if self.kind not in ("blobs", "digits", "external"):
            raise ConfigurationError(f"data kind {self.kind!r} is not blobs, digits or external")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    model: ObserverConfig = field(default_factory=ObserverConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    data: DataSettings = field(default_factory=DataSettings)
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model.to_dict(),
            "loss": self.loss.as_dict(),
            "optimizer": {f.name: getattr(self.optimizer, f.name) for f in fields(OptimizerSettings)},
            "training": {f.name: getattr(self.training, f.name) for f in fields(TrainingSettings)},
            "data": {**{f.name: getattr(self.data, f.name) for f in fields(DataSettings)},
                     "counts": list(self.data.counts)},
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        _strict("experiment", d, {f.name for f in fields(cls)})
        kw = {}
        if "name" in d:
            kw["name"] = str(d["name"])
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        if "model" in d:
            kw["model"] = ObserverConfig.from_dict(d["model"])
        for key, typ in (("loss", LossWeights), ("optimizer", OptimizerSettings), ("training", TrainingSettings),
                         ("data", DataSettings)):
            if key in d:
                kw[key] = typ(**_strict(key, d[key], {f.name for f in fields(typ)}))
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc


def load_config(ref: str) -> ExperimentConfig:
    """Load a config from a JSON path or a bundled preset name."""
    if ref in PRESETS:
        text = resources.files("stobserver.presets").joinpath(f"{ref}.json").read_text()
    else:
        path = Path(ref)
        if not path.is_file():
            raise ConfigurationError(f"no config file {ref!r} and no preset of that name (presets: {PRESETS})")
        text = path.read_text(encoding="utf-8")
    return ExperimentConfig.from_json(text)
