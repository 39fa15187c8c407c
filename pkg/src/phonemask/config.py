"""Experiment configuration: dataclasses loaded from a TOML file."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .eval_metrics import CONDITIONS


class ConfigError(ValueError):
    pass


@dataclass
class CorpusConfig:
    kind: str = "synthetic"          # or "files"
    n_train: int = 18
    n_dev: int = 5
    n_test: int = 8
    phonemes_per_utterance: int = 10
    # kind = "files": [{id, audio, labels, split}]
    utterances: List[Dict[str, str]] = field(default_factory=list)


@dataclass
class RoomConfig:
    name: str = "meeting"
    distance_m: float = 1.0
    height_m: Optional[float] = None
    highpass_hz: Optional[float] = 50.0
    max_order: Optional[int] = None

    @property
    def room_id(self) -> str:
        return f"{self.name}-{self.distance_m:g}m"


@dataclass
class FeatureConfig:
    n_maxima: int = 8
    ibm_threshold_db: float = -6.0


@dataclass
class TrainingConfig:
    batch_size_utterances: int = 2
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience_epochs: int = 10
    min_delta: float = 0.001
    init_range: float = 0.1
    max_epochs: int = 200


@dataclass
class OutputConfig:
    vocoder_target_rms: float = 0.05
    electrodogram_conditions: List[str] = field(
        default_factory=lambda: ["REV", "ERM-1", "ERM-MOA", "ERM-PHN", "IRM", "DP"])
    # entry id for the electrodogram export; empty picks the first test entry
    # of the most reverberant room
    electrodogram_entry: str = ""


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "runs/default"
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    rooms: List[RoomConfig] = field(default_factory=lambda: [
        RoomConfig("meeting", 1.0), RoomConfig("office", 2.6)])
    features: FeatureConfig = field(default_factory=FeatureConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    conditions: List[str] = field(default_factory=lambda: list(CONDITIONS))
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        bad = [c for c in self.conditions if c not in CONDITIONS]
        if bad:
            raise ConfigError(f"unknown conditions {bad}; expected a subset of {list(CONDITIONS)}")
        if not self.rooms:
            raise ConfigError("at least one room is required")
        ids = [r.room_id for r in self.rooms]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate rooms {ids}")
        if self.corpus.kind not in ("synthetic", "files"):
            raise ConfigError(f"unknown corpus kind {self.corpus.kind!r}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def _build(cls, data: Dict[str, Any], where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {unknown}")
    return cls(**data)


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    data = dict(data)
    sections = {
        "corpus": CorpusConfig,
        "features": FeatureConfig,
        "training": TrainingConfig,
        "output": OutputConfig,
    }
    kwargs: Dict[str, Any] = {}
    for key, cls in sections.items():
        if key in data:
            kwargs[key] = _build(cls, data.pop(key), key)
    if "rooms" in data:
        kwargs["rooms"] = [_build(RoomConfig, r, "rooms") for r in data.pop("rooms")]
    top = {"seed", "out", "conditions"}
    unknown = sorted(set(data) - top)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {unknown}")
    kwargs.update(data)
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)
