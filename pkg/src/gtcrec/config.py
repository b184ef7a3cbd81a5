"""Run configuration: `key = value` files with flag overrides on top."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_SPLIT = (0.8, 0.1, 0.1)


@dataclass
class TrainConfig:
    interactions: str | None = None
    visual: str | None = None
    textual: str | None = None
    d: int = 64
    n_layers: int = 2
    T: int = 500
    beta_start: float = 1e-4
    beta_end: float = 0.02
    omega1: float = 0.6
    omega2: float = 0.6
    reg: float = 0.01
    tau_init: float = 1.0
    lr: float = 1e-3
    batch_size: int = 2048
    content_batch: int = 1024
    epochs: int = 100
    patience: int = 20
    eval_every: int = 1
    seed: int = 0
    n_seeds: int = 5
    k_core: int = 5
    k_list: tuple[int, ...] = (5, 10, 20, 50)
    variant: str = "full"

    def validate(self) -> "TrainConfig":
        from .trainer import VARIANTS  # late import; trainer depends on config

        checks = [
            ("d", self.d >= 1, "d must be >= 1"),
            ("n_layers", self.n_layers >= 0, "n_layers must be >= 0"),
            ("T", self.T >= 1, "T must satisfy T >= 1"),
            ("beta_start", 0 < self.beta_start < 1, "beta_start must lie in (0, 1)"),
            (
                "beta_end",
                self.beta_start <= self.beta_end < 1,
                "beta_end must lie in [beta_start, 1)",
            ),
            ("omega1", self.omega1 >= 0, "omega1 must be >= 0"),
            ("omega2", self.omega2 >= 0, "omega2 must be >= 0"),
            ("reg", self.reg >= 0, "reg must be >= 0"),
            ("tau_init", self.tau_init > 0, "tau_init must be > 0"),
            ("lr", self.lr > 0, "lr must be > 0"),
            ("batch_size", self.batch_size >= 1, "batch_size must be >= 1"),
            ("content_batch", self.content_batch >= 2, "content_batch must be >= 2"),
            ("epochs", self.epochs >= 0, "epochs must be >= 0"),
            ("patience", self.patience >= 1, "patience must be >= 1"),
            ("eval_every", self.eval_every >= 1, "eval_every must be >= 1"),
            ("n_seeds", self.n_seeds >= 1, "n_seeds must be >= 1"),
            ("k_core", self.k_core >= 1, "k_core must be >= 1"),
            (
                "k_list",
                len(self.k_list) > 0
                and list(self.k_list) == sorted(set(self.k_list))
                and min(self.k_list) >= 1,
                "k_list must be non-empty, ascending, unique, all >= 1",
            ),
            ("variant", self.variant in VARIANTS, f"variant must be one of {sorted(VARIANTS)}"),
        ]
        for _key, ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self


def _coerce(key: str, value, target_type) -> object:
    if isinstance(value, str):
        value = value.strip()
    if target_type is int:
        try:
            # reject silent float truncation ("1.5" is not an int)
            if isinstance(value, float) and value != int(value):
                raise ValueError
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} expects an integer, got {value!r}") from None
    if target_type is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key} expects a number, got {value!r}") from None
    if key == "k_list":
        if isinstance(value, (tuple, list)):
            return tuple(int(v) for v in value)
        try:
            return tuple(int(tok) for tok in str(value).replace(",", " ").split())
        except ValueError:
            raise ConfigError(f"k_list expects integers, got {value!r}") from None
    # remaining fields are strings / optional paths
    if value in ("", "none", "None"):
        return None
    return str(value)


def _field_types() -> dict[str, type]:
    types: dict[str, type] = {}
    for f in dataclasses.fields(TrainConfig):
        if f.name == "k_list":
            types[f.name] = tuple
        elif isinstance(f.default, int):
            types[f.name] = int
        elif isinstance(f.default, float):
            types[f.name] = float
        else:
            types[f.name] = str
    return types


def parse_config(path: str | None = None, overrides: dict | None = None) -> TrainConfig:
    """Defaults, then the config file, then explicit overrides; then validate."""
    types = _field_types()
    values: dict[str, object] = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                key = key.strip()
                if not sep or not key:
                    raise ConfigError(f"line {lineno}: expected `key = value`, got {raw.strip()!r}")
                if key not in types:
                    raise ConfigError(f"unknown config key {key!r} (line {lineno})")
                values[key] = _coerce(key, value, types[key])
    for key, value in (overrides or {}).items():
        if key not in types:
            raise ConfigError(f"unknown config key {key!r}")
        if value is None:
            continue
        values[key] = _coerce(key, value, types[key])
    return TrainConfig(**values).validate()


def format_config(config: TrainConfig) -> str:
    """Round-trippable `key = value` snapshot (None fields are omitted)."""
    lines = []
    for f in dataclasses.fields(TrainConfig):
        value = getattr(config, f.name)
        if value is None:
            continue
        if f.name == "k_list":
            value = ",".join(str(k) for k in value)
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"
