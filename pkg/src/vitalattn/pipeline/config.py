"""Training configuration and its flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

MODEL_KINDS = ("nbeats", "nhits")

# covariates used for the "with covariates" rows of the benchmark
DEFAULT_COVARIATES = {"MBP": ("HR", "RR"), "HR": ("MBP", "RR"), "RR": ("HR", "MBP")}


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    model_kind: str = "nhits"
    attention: bool = False
    target: str = "MBP"
    covariates: tuple[str, ...] = ()
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    grad_clip: float = 5.0
    seed: int = 0
    L: int = 72
    H: int = 36
    width: int = 128
    nbeats_stacks: int = 3
    nbeats_blocks: int = 3
    nhits_kernels: tuple[int, ...] = (8, 4, 1)
    nhits_ratios: tuple[int, ...] = (12, 4, 1)
    nhits_blocks: int = 1

    def __post_init__(self):
        self.covariates = tuple(self.covariates)
        self.nhits_kernels = tuple(int(k) for k in self.nhits_kernels)
        self.nhits_ratios = tuple(int(r) for r in self.nhits_ratios)
        self.validate()

    def validate(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.L <= 0 or self.H <= 0:
            raise ConfigError("L and H must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise ConfigError("patience must lie between 0 and max_epochs")
        if self.target in self.covariates:
            raise ConfigError(f"target {self.target} cannot also be a covariate")
        if len(self.nhits_kernels) != len(self.nhits_ratios):
            raise ConfigError("nhits_kernels and nhits_ratios must have the same length")

    @property
    def model_name(self) -> str:
        return self.model_kind + ("+attention" if self.attention else "")

    @property
    def n_series(self) -> int:
        return 1 + len(self.covariates)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: _coerce(k, v) for k, v in d.items()})

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _split_list(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v).strip() for v in value]
    return [p.strip() for p in str(value).split(",") if p.strip()]


def _coerce(key: str, value):
    kind = {f.name: f.type for f in fields(TrainConfig)}[key]
    kind = str(kind)
    try:
        if kind == "bool":
            return value if isinstance(value, bool) else parse_bool(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "tuple[int, ...]":
            return tuple(int(v) for v in _split_list(value))
        if kind == "tuple[str, ...]":
            return tuple(_split_list(value))
        return str(value).strip()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in {f.name for f in fields(TrainConfig)}:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out
