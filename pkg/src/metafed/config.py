"""Experiment configuration.

Configs are frozen dataclasses validated on construction. ``ExperimentConfig``
round-trips through plain dicts/JSON field-for-field; unknown keys are
rejected rather than ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Literal, Optional, Union

from .errors import ConfigError
from .model import ModelSpec
from .tasks import TaskFamily

Strategy = Literal["centralized", "standard-fl", "meta-fl"]
STRATEGIES = ("centralized", "standard-fl", "meta-fl")
WEIGHTINGS = ("by-size", "by-quality", "uniform")


@dataclass(frozen=True)
class FedConfig:
    K: int = 10
    R: int = 50
    local_epochs: int = 1
    batch_size: Union[int, str] = "full"
    participation: float = 1.0
    weighting: str = "by-size"
    examples_per_client: Union[int, tuple] = 20
    quality_weights: Optional[tuple] = None
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.examples_per_client, list):
            object.__setattr__(self, "examples_per_client", tuple(self.examples_per_client))
        if isinstance(self.quality_weights, list):
            object.__setattr__(self, "quality_weights", tuple(self.quality_weights))
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.R < 1:
            raise ConfigError("R must be >= 1")
        if self.local_epochs < 1:
            raise ConfigError("local_epochs must be >= 1")
        if self.batch_size != "full" and not (isinstance(self.batch_size, int)
                                               and self.batch_size >= 1):
            raise ConfigError("batch_size must be a positive integer or 'full'")
        if not 0 < self.participation <= 1:
            raise ConfigError("participation must lie in (0, 1]")
        if self.participants < 1:
            raise ConfigError("participation * K rounds to zero clients")
        if self.weighting not in WEIGHTINGS:
            raise ConfigError(f"weighting must be one of {WEIGHTINGS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def participants(self) -> int:
        return int(round(self.participation * self.K))


@dataclass(frozen=True)
class MetaConfig:
    alpha: float = 0.01
    beta: float = 0.01
    inner_steps: int = 1
    meta_batch: int = 8
    order: str = "first"

    def __post_init__(self):
        if not self.alpha > 0 or not self.beta > 0:
            raise ConfigError("alpha and beta must be > 0")
        if self.inner_steps < 1:
            raise ConfigError("inner_steps must be >= 1")
        if self.meta_batch < 1:
            raise ConfigError("meta_batch must be >= 1")
        if self.order not in ("first", "second", "joint"):
            raise ConfigError("order must be 'first', 'second' or 'joint'")


@dataclass(frozen=True)
class ControllerConfig:
    enabled: bool = True
    eta0: float = 0.05
    eta_min: float = 1e-5
    eta_max: float = 1.0
    gamma_up: float = 1.1
    gamma_down: float = 0.5

    def __post_init__(self):
        if not 0 < self.eta_min <= self.eta0 <= self.eta_max:
            raise ConfigError("need 0 < eta_min <= eta0 <= eta_max")
        if not self.gamma_up >= 1 or not 0 < self.gamma_down <= 1:
            raise ConfigError("need gamma_up >= 1 and 0 < gamma_down <= 1")


@dataclass(frozen=True)
class PrivacyConfig:
    enabled: bool = False
    clip_norm: float = 1.0
    noise_sigma: float = 0.0
    seed_stream: Optional[int] = None

    def __post_init__(self):
        if self.enabled and not self.clip_norm > 0:
            raise ConfigError("clip_norm must be > 0 when privacy is enabled")
        if not self.noise_sigma >= 0:
            raise ConfigError("noise_sigma must be >= 0")


@dataclass(frozen=True)
class EvalConfig:
    """How models are scored.

    ``regression_tolerance`` scales the per-task target standard deviation
    into the absolute error under which a regression prediction counts as
    correct.
    """

    target_accuracy: Optional[float] = None
    target_loss: Optional[float] = None
    adaptation_steps: int = 5
    eval_tasks: int = 20
    validation_tasks: int = 5
    support_size: int = 10
    query_size: int = 100
    regression_tolerance: float = 0.1

    def __post_init__(self):
        if self.adaptation_steps < 0:
            raise ConfigError("adaptation_steps must be >= 0")
        if self.eval_tasks < 1 or self.validation_tasks < 1:
            raise ConfigError("eval_tasks and validation_tasks must be >= 1")
        if self.support_size < 1 or self.query_size < 1:
            raise ConfigError("support_size and query_size must be >= 1")
        if not self.regression_tolerance > 0:
            raise ConfigError("regression_tolerance must be > 0")


@dataclass(frozen=True)
class ExperimentConfig:
    strategy: str = "standard-fl"
    model: ModelSpec = field(default_factory=ModelSpec)
    family: TaskFamily = field(default_factory=TaskFamily)
    fed: FedConfig = field(default_factory=FedConfig)
    meta: Optional[MetaConfig] = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    privacy: PrivacyConfig = field(default_factory=PrivacyConfig)
    seed: int = 0
    eval: EvalConfig = field(default_factory=EvalConfig)
    record_timing: bool = True

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if (self.strategy == "meta-fl") != (self.meta is not None):
            raise ConfigError("a meta section is required for meta-fl and forbidden otherwise")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        m, f = self.model, self.family
        if (m.input_dim, m.output_dim) != (f.input_dim, f.output_dim):
            raise ConfigError("model and task family dimensions disagree")
        if m.is_classifier != f.is_classification:
            raise ConfigError("classification families need softmax-cross-entropy and vice versa")
        if self.fed.quality_weights is not None and len(self.fed.quality_weights) != self.fed.K:
            raise ConfigError("quality_weights must have K entries")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return _build(cls, data, "config")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config document must be a JSON object")
        return cls.from_dict(data)


_NESTED = {
    "model": ModelSpec,
    "family": TaskFamily,
    "fed": FedConfig,
    "meta": MetaConfig,
    "controller": ControllerConfig,
    "privacy": PrivacyConfig,
    "eval": EvalConfig,
}


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {', '.join(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if cls is ExperimentConfig and key in _NESTED and value is not None:
            value = _build(_NESTED[key], value, f"{path}.{key}")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(config: ExperimentConfig) -> str:
    """Short stable digest of the full configuration."""
    return hashlib.sha256(config.to_json().encode()).hexdigest()[:16]
