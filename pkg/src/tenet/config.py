"""Experiment configuration: the hyperparameter record, data paths, YAML round-trip."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

OPTIMIZERS = ("adamw", "adam", "sgd")


@dataclass
class HyperParams:
    """Training and prediction knobs. Defaults are the reference full-scale setting."""

    num_classes: int = 91      # COCO category slots
    vocab_size: int = 1000     # cap on the explanation vocabulary
    num_epochs: int = 20
    batch_size: int = 32
    height: int = 400
    width: int = 400
    top_c: int = 3             # classes emitted per prediction
    top_w: int = 10            # words emitted per prediction
    optimizer: str = "adamw"
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        """Raise ValueError listing every violated constraint."""
        problems = []
        for name in ("num_classes", "vocab_size", "batch_size", "height", "width",
                     "top_c", "top_w"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.num_epochs < 0:
            problems.append(f"num_epochs must be >= 0, got {self.num_epochs}")
        if self.top_c > self.num_classes:
            problems.append(f"top_c ({self.top_c}) exceeds num_classes ({self.num_classes})")
        if self.top_w > self.vocab_size:
            problems.append(f"top_w ({self.top_w}) exceeds vocab_size ({self.vocab_size})")
        if self.optimizer not in OPTIMIZERS:
            problems.append(f"unknown optimizer '{self.optimizer}', expected one of {OPTIMIZERS}")
        if self.learning_rate <= 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            problems.append(f"weight_decay must be >= 0, got {self.weight_decay}")
        if problems:
            raise ValueError("invalid hyperparameters: " + "; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "HyperParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**data)


_HP_FIELDS = frozenset(f.name for f in dataclasses.fields(HyperParams))

_PATH_FIELDS = ("train_instances", "train_captions", "train_images",
                "val_instances", "val_captions", "val_images")


@dataclass
class ExperimentConfig:
    """Everything one experiment needs: hyperparameters, model, data, seeds."""

    hp: HyperParams = field(default_factory=HyperParams)
    backbone: str = "resnet50"
    pretrained: bool = True
    freeze_backbone: bool = False
    loss_weight: float = 1.0   # weight on the word-loss term; 1.0 = plain sum
    min_count: int = 4         # vocabulary frequency filter
    min_length: int = 3        # vocabulary word-length filter
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: Path = Path("runs")
    fixture: bool = False      # generate and use the synthetic dataset
    fixture_images: int = 20
    fixture_val_images: int = 5
    fixture_seed: int = 7
    train_instances: Path | None = None
    train_captions: Path | None = None
    train_images: Path | None = None
    val_instances: Path | None = None
    val_captions: Path | None = None
    val_images: Path | None = None

    def validate(self) -> None:
        self.hp.validate()
        problems = []
        if self.min_count < 1:
            problems.append(f"min_count must be >= 1, got {self.min_count}")
        if self.min_length < 1:
            problems.append(f"min_length must be >= 1, got {self.min_length}")
        if self.loss_weight <= 0:
            problems.append(f"loss_weight must be > 0, got {self.loss_weight}")
        if not self.seeds:
            problems.append("seeds must not be empty")
        if self.fixture:
            if self.fixture_images < 1 or self.fixture_val_images < 1:
                problems.append("fixture_images and fixture_val_images must be >= 1")
        else:
            missing = [name for name in _PATH_FIELDS if getattr(self, name) is None]
            if missing:
                problems.append(
                    "data paths required unless fixture mode is on; missing: "
                    + ", ".join(missing))
        from .model import available_backbones  # lazy: avoids import cycle
        if self.backbone not in available_backbones():
            problems.append(
                f"unknown backbone '{self.backbone}'; "
                f"supported: {', '.join(available_backbones())}")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        """Flat key-value view; hyperparameters are inlined at the top level."""
        out: dict[str, Any] = dict(self.hp.to_dict())
        for f in dataclasses.fields(self):
            if f.name == "hp":
                continue
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        hp_data = {k: data.pop(k) for k in list(data) if k in _HP_FIELDS}
        known = {f.name for f in dataclasses.fields(cls)} - {"hp"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for name in _PATH_FIELDS + ("out_dir",):
            if data.get(name) is not None:
                data[name] = Path(data[name])
        if "seeds" in data:
            data["seeds"] = [int(s) for s in data["seeds"]]
        return cls(hp=HyperParams.from_dict(hp_data), **data)


def load_config(path: Path | str) -> ExperimentConfig:
    """Parse a YAML config file. Unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must contain a key-value mapping")
    return ExperimentConfig.from_dict(data)


def save_config(config: ExperimentConfig, path: Path | str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config.to_dict(), fh, default_flow_style=False, sort_keys=False)
