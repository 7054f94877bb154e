"""Pipeline configuration: flags > config file > environment > defaults.

The config file is plain ``key = value`` lines; ``#`` starts a comment and
list values are comma-separated::

    dataset = out/dataset.json
    thresholds = 0.25, 0.5, 0.75, 1.0
    oracle_url = http://localhost:8080/generate
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .sdt import CORRECTIONS, DEFAULT_THRESHOLDS, Scope

ENV_ALIASES = {"oracle_url": "ORACLE_URL", "oracle_token": "ORACLE_TOKEN"}
ENV_PREFIX = "NORMVERIFY_"
_SECRET = {"oracle_token"}


@dataclass
class PipelineConfig:
    concepts: str | None = None
    cells: str | None = None
    dataset: str | None = None
    machine: str | None = None
    template: str | None = None
    oracle_url: str | None = None
    oracle_token: str | None = None
    cache: str | None = None
    thresholds: list[float] = field(default_factory=lambda: list(DEFAULT_THRESHOLDS))
    scopes: list[str] = field(default_factory=lambda: [s.value for s in Scope])
    correction: str = "half-count"
    unparseable: str = "zero"
    concurrency: int = 8
    seed: int = 0
    max_new_tokens: int = 5
    retries: int = 4
    timeout: float = 60.0

    def validate(self, require_paths: tuple[str, ...] = ()) -> "PipelineConfig":
        from .norms import check_tau
        from .errors import InvalidThreshold

        try:
            self.thresholds = [check_tau(t) for t in self.thresholds]
        except InvalidThreshold as exc:
            raise ConfigError(str(exc)) from None
        if not self.thresholds:
            raise ConfigError("thresholds list is empty")
        for s in self.scopes:
            if s not in {x.value for x in Scope}:
                raise ConfigError(f"unknown scope {s!r}")
        if self.correction not in CORRECTIONS:
            raise ConfigError(f"correction must be one of {CORRECTIONS}")
        if self.unparseable not in ("zero", "fail"):
            raise ConfigError("unparseable must be 'zero' or 'fail'")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        for name in require_paths:
            value = getattr(self, name)
            if not value:
                raise ConfigError(f"missing required setting: {name}")
            if not Path(value).exists():
                raise FileNotFoundError(f"{name} file not found: {value}")
        return self

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in _SECRET and v:
                v = "***"
            if isinstance(v, list):
                v = ", ".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


def _coerce(name: str, raw):
    kinds = {f.name: f for f in fields(PipelineConfig)}
    if name not in kinds:
        raise ConfigError(f"unknown configuration key {name!r}")
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if name == "thresholds":
            return [float(x) for x in raw.split(",") if x.strip()]
        if name == "scopes":
            return [x.strip().lower() for x in raw.split(",") if x.strip()]
        if name in ("concurrency", "seed", "max_new_tokens", "retries"):
            return int(raw)
        if name == "timeout":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw.strip()


def read_config_file(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        parser.read_string("[normverify]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {k: _coerce(k, v) for k, v in parser["normverify"].items()}


def from_environment(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for f in fields(PipelineConfig):
        var = ENV_ALIASES.get(f.name, ENV_PREFIX + f.name.upper())
        if var in environ:
            out[f.name] = _coerce(f.name, environ[var])
    return out


def resolve(flags: dict, config_path=None, environ=None) -> PipelineConfig:
    """Merge settings; ``flags`` entries that are None count as unset."""
    merged = from_environment(environ)
    if config_path:
        merged.update(read_config_file(config_path))
    merged.update({k: _coerce(k, v) for k, v in flags.items() if v is not None})
    return PipelineConfig(**merged)
