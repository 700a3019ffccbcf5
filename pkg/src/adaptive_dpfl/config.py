"""Flat ``key = value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    # model
    model: str = "softmax-regression"
    hidden_width: int = 16
    # data
    data_csv: str | None = None
    num_classes: int = 4
    num_features: int = 20
    samples_per_class: int = 1000
    class_separation: float = 3.0
    test_fraction: float = 0.2
    # partition
    partition: str = "dirichlet"
    beta: float = 0.05
    num_clients: int = 10
    # DPSGD
    learning_rate: float = 0.5
    clip_bound: float = 1.0
    noise_multiplier: float = 1.0
    sampling_rate: float = 0.015
    # privacy / resources
    epsilon: float | None = None
    delta: float = 1e-5
    r_c: int | None = None
    r_s: int = 100
    # scheduling
    scheduler: str = "ali"
    gamma: float = 10.0
    tau_cap: int = 64
    # seeds and execution
    seed: int = 0
    data_seed: int | None = None
    init_seed: int | None = None
    train_seed: int | None = None
    workers: int = 1
    out: str | None = None

    def validate(self) -> "ExperimentConfig":
        if (self.epsilon is None) == (self.r_c is None):
            raise ConfigError("set exactly one of 'epsilon' (privacy target) or 'r_c'")
        if self.r_c is not None and self.r_c < 0:
            raise ConfigError("r_c must be >= 0")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if self.r_s < 0:
            raise ConfigError("r_s must be >= 0")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must be in (0, 1)")
        if self.epsilon is not None and self.noise_multiplier <= 0:
            raise ConfigError("a privacy target needs noise_multiplier > 0")
        self.scheduler_kind()
        for name in ("tau_cap", "workers", "num_clients"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError(f"unknown partition {self.partition!r}")
        for name in ("learning_rate", "clip_bound"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if not 0 < self.sampling_rate <= 1:
            raise ConfigError("sampling_rate must be in (0, 1]")
        if self.noise_multiplier < 0:
            raise ConfigError("noise_multiplier must be >= 0")
        return self

    def scheduler_kind(self) -> tuple[str, int | None]:
        """('ali', None) or ('fixed', tau)."""
        if self.scheduler == "ali":
            return "ali", None
        if self.scheduler.startswith("fixed:"):
            try:
                tau = int(self.scheduler.split(":", 1)[1])
            except ValueError:
                tau = 0
            if tau >= 1:
                return "fixed", tau
        raise ConfigError(f"scheduler must be 'ali' or 'fixed:<k>' with k >= 1, got {self.scheduler!r}")

    def seeds(self) -> tuple[int, int, int]:
        """(data, init, train) seeds, each defaulting to a derivation of ``seed``."""
        pick = lambda v, off: v if v is not None else self.seed * 3 + off
        return pick(self.data_seed, 0), pick(self.init_seed, 1), pick(self.train_seed, 2)

    # serialisation -------------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'' if value is None else _dump(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        pairs = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            pairs[key] = value
        return cls().with_overrides(pairs)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def with_overrides(self, overrides: Mapping[str, Any]) -> "ExperimentConfig":
        types = {f.name: f.type for f in fields(self)}
        changes = {}
        for key, value in overrides.items():
            key = key.replace("-", "_")
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            changes[key] = _parse(key, types[key], value)
        return dataclasses.replace(self, **changes)


def _dump(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _parse(key: str, type_name: str, value):
    if not isinstance(value, str):
        return value
    optional = "None" in type_name
    if value == "" or (optional and value.lower() == "none"):
        if optional:
            return None
        raise ConfigError(f"{key} needs a value")
    base = type_name.split("|")[0].strip()
    try:
        if base == "int":
            return int(value)
        if base == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {base}") from None
    return value
