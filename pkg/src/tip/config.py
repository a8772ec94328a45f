"""Run configuration: defaults, flat config files, and flag overrides.

Config files are ``key = value`` lines (``#`` comments allowed); keys match
the long CLI flags with dashes or underscores.  Precedence is defaults <
config file < command-line flags.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from tip.encoder import Variant


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data sources for prepare: three edge files, or the synthetic generator
    pp: str | None = None
    pd: str | None = None
    dd: str | None = None
    synth: bool = False
    proteins: int = 200
    drugs: int = 50
    relations: int = 5
    seed_synth: int = 0
    min_count: int = 500
    ratio: float = 0.8
    # model and optimisation
    variant: str = "tip-sum"
    epochs: int = 100
    lr: float = 0.01
    nn_hidden: int = 16
    seed_init: int = 0
    seed_split: int = 0
    seed_neg: int = 0
    # locations
    data: str | None = None
    checkpoint: str | None = None
    out: str | None = None
    top: int = 20

    def validate_variant(self) -> None:
        Variant.parse(self.variant)

    def check_source(self) -> None:
        files = [self.pp, self.pd, self.dd]
        if self.synth and any(files):
            raise ConfigError("give either edge files or --synth, not both")
        if not self.synth and not all(files):
            raise ConfigError("prepare needs --pp, --pd and --dd (or --synth)")

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw):
    default = getattr(RunConfig, name, None)
    kind = _FIELDS[name].type
    if isinstance(raw, str):
        raw = raw.strip()
        if kind == "bool" or isinstance(default, bool):
            low = raw.lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
            return low in ("1", "true", "yes", "on")
        try:
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
        except ValueError:
            raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def read_config_file(path) -> dict:
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for key, raw in parser["run"].items():
        name = key.replace("-", "_")
        if name not in _FIELDS:
            raise ConfigError(f"{path}: unknown key {key!r}")
        out[name] = _coerce(name, raw)
    return out


def resolve(config_path=None, overrides: dict | None = None) -> RunConfig:
    values: dict = {}
    if config_path:
        values.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None and key in _FIELDS:
            values[key] = value
    cfg = RunConfig(**values)
    cfg.validate_variant()
    return cfg
