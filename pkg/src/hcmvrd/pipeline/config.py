"""Pipeline configuration: JSON round-trip with strict key checking and dotted overrides."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Any, Mapping

from ..graphs import DIRECTIONS, AffinityConfig
from ..neural.params import ARCHITECTURES

SPATIAL_MODES = ("both", "pos_only", "sem_only", "off")
TEMPORAL_MODES = ("on", "off", "dense_unweighted")
LOSSES = ("focal", "bce")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 20
    lr: float = 1e-3
    lr_drop_epoch: int = 10
    lr_drop_factor: float = 10.0  # lr is divided by this at lr_drop_epoch
    weight_decay: float = 1e-2
    batch_clips: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.batch_clips < 1 or self.lr <= 0 or self.lr_drop_factor <= 0:
            raise ConfigError("epochs must be >= 0, batch_clips >= 1, lr and lr_drop_factor > 0")

    def lr_at(self, epoch: int) -> float:
        return self.lr / self.lr_drop_factor if epoch >= self.lr_drop_epoch else self.lr


@dataclass(frozen=True)
class PipelineConfig:
    clip_length: int = 30
    clip_stride: int = 15
    hidden: int = 768
    depth: int = 3
    architecture: str = "hierarchical"
    temporal_direction: str = "forward"
    spatial_mode: str = "both"
    temporal_mode: str = "on"
    spatial_affinity: bool = True
    loss: str = "focal"
    focal_gamma: float = 2.0
    focal_balance: float = 0.25
    membership_threshold: float = 0.5
    target_overlap: float = 0.5
    top_k: int = 10
    affinity: AffinityConfig = field(default_factory=AffinityConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def __post_init__(self):
        if not 1 <= self.clip_stride <= self.clip_length:
            raise ConfigError("need 1 <= clip_stride <= clip_length")
        if self.hidden < 1 or self.depth < 1 or self.top_k < 1:
            raise ConfigError("hidden, depth and top_k must be positive")
        for name, allowed in (
            ("architecture", ARCHITECTURES),
            ("temporal_direction", DIRECTIONS),
            ("spatial_mode", SPATIAL_MODES),
            ("temporal_mode", TEMPORAL_MODES),
            ("loss", LOSSES),
        ):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name}={getattr(self, name)!r}; expected one of {allowed}")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["affinity"] = {"alpha": self.affinity.alpha, "beta": self.affinity.beta, "lambda": self.affinity.lam}
        return out

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PipelineConfig":
        doc = dict(doc)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name not in doc:
                continue
            value = doc[f.name]
            if f.name == "affinity":
                value = _affinity_from(value)
            elif f.name == "training":
                value = _sub_from(TrainingConfig, value, "training")
            kwargs[f.name] = value
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        """Apply dotted-key overrides such as ``{"training.epochs": 3}``; values may be strings."""
        doc = self.to_dict()
        for key, raw in overrides.items():
            parts = key.split(".")
            node = doc
            for p in parts[:-1]:
                if p not in node or not isinstance(node[p], dict):
                    raise ConfigError(f"unknown config field {key!r}")
                node = node[p]
            if parts[-1] not in node:
                raise ConfigError(f"unknown config field {key!r}")
            node[parts[-1]] = _coerce(raw, node[parts[-1]], key)
        return PipelineConfig.from_dict(doc)


def _affinity_from(value) -> AffinityConfig:
    if isinstance(value, AffinityConfig):
        return value
    if not isinstance(value, Mapping):
        raise ConfigError("affinity must be an object")
    unknown = set(value) - {"alpha", "beta", "lambda"}
    if unknown:
        raise ConfigError(f"unknown affinity fields: {sorted(unknown)}")
    d = AffinityConfig()
    try:
        return AffinityConfig(
            alpha=float(value.get("alpha", d.alpha)),
            beta=float(value.get("beta", d.beta)),
            lam=float(value.get("lambda", d.lam)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _sub_from(cls, value, name):
    if isinstance(value, cls):
        return value
    if not isinstance(value, Mapping):
        raise ConfigError(f"{name} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - known
    if unknown:
        raise ConfigError(f"unknown {name} fields: {sorted(unknown)}")
    return cls(**value)


def _coerce(raw, current, key):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for {key}") from None
    return raw


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from None
    return PipelineConfig.from_dict(doc)
