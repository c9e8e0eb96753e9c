"""Experiment configuration: flat ``key = value`` files with typed defaults."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

GENERATORS = ("unif", "onespe", "stack")
TASK_GENERATORS = ("unif", "onespe", "subvolume")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    generator: str = "unif"
    task_generator: str = "unif"
    n_dims: int = 10
    n_workers: int = 10_000
    n_tasks: int = 1_000
    epsilon: float = 0.1
    tau: int = 1
    T: int = 2
    l_bins: int = 10
    depth_h: int = 10
    key_bits: int = 1024
    subvolume_ratio: float = 1.0
    seed: int = 0
    repetitions: int = 5
    mock_crypto: bool = False
    # mock crypto only: draw each sum's total noise at once instead of per worker
    aggregate_noise: bool = True
    n_key_shares: int = 5
    task_bits: int = 512
    # profile file (and its .tags.json manifest) for the stack generator
    stack_profiles: str = ""
    pir_fetch: bool = True

    def __post_init__(self):
        problems = []
        if self.generator not in GENERATORS:
            problems.append(f"generator must be one of {GENERATORS}")
        if self.task_generator not in TASK_GENERATORS:
            problems.append(f"task_generator must be one of {TASK_GENERATORS}")
        if self.T <= self.tau:
            problems.append("T must exceed tau")
        if self.tau >= self.n_workers:
            problems.append("tau must be below n_workers")
        if not self.epsilon > 0:
            problems.append("epsilon must be positive")
        if self.repetitions < 1:
            problems.append("repetitions must be >= 1")
        if min(self.n_dims, self.n_workers, self.n_tasks, self.l_bins) < 1 or self.depth_h < 0:
            problems.append("sizes must be positive")
        if not 0 < self.subvolume_ratio <= 1:
            problems.append("subvolume_ratio must be in (0, 1]")
        if not self.mock_crypto and self.n_key_shares < self.T:
            problems.append("n_key_shares must be >= T")
        if self.generator == "stack" and not self.stack_profiles:
            problems.append("the stack generator needs stack_profiles")
        if problems:
            raise ConfigError("; ".join(problems))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_DEFAULTS = ExperimentConfig()


def _coerce(key: str, raw):
    if key not in _FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = type(getattr(_DEFAULTS, key))
    if not isinstance(raw, str):
        return kind(raw)
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: not a boolean: {raw!r}")
    try:
        return int(float(raw)) if kind is int else kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_config_text(Path(path).read_text()) if path else {}
    for key, value in (overrides or {}).items():
        values[key] = _coerce(key, value)
    return ExperimentConfig(**values)


def dumps_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.as_dict().items())
