"""Run configuration: every hyperparameter in one place, loadable from YAML/JSON."""

from __future__ import annotations

import dataclasses
import json
import os
import re
from dataclasses import dataclass, field, fields, replace

import yaml

from .contact import DEFAULT_N_POINTS, DEFAULT_TAU_T
from .objective import ObjectiveConfig
from .optimizer import LmParams
from .sampler import AnnealParams, EnergyParams


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """YAML 1.1 insists on a dot in floats; accept JSON-style ``1e+16`` as well."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:\d+\.?\d*|\.\d+)[eE][-+]?\d+$"),
    list("-+0123456789."),
)


def parse_value(text: str):
    return yaml.load(text, Loader=_Loader)


_SECTIONS = {"objective": ObjectiveConfig, "lm": LmParams, "anneal": AnnealParams, "energy": EnergyParams}


@dataclass(frozen=True)
class RunConfig:
    object: str | None = None
    contact: str | None = None
    hand: str = "barrett-like"
    output: str | None = None
    tau_t: float = DEFAULT_TAU_T
    n_points: int = DEFAULT_N_POINTS
    n_approach: int = 10
    object_h: float = 0.002
    seed: int = 0
    threads: int | None = None
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    lm: LmParams = field(default_factory=LmParams)
    anneal: AnnealParams = field(default_factory=AnnealParams)
    energy: EnergyParams = field(default_factory=EnergyParams)

    def __post_init__(self):
        if not 0.0 < self.tau_t < 1.0:
            raise ConfigError("tau_t must lie in (0, 1)")
        if self.n_points < 1 or self.n_approach < 1:
            raise ConfigError("n_points and n_approach must be >= 1")
        if self.object_h <= 0:
            raise ConfigError("object_h must be > 0")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")

    def to_dict(self, runtime: bool = True) -> dict:
        """Plain dict; ``runtime=False`` drops settings that cannot change results."""
        d = dataclasses.asdict(self)
        if not runtime:
            d.pop("threads")
            d.pop("output")
        return d

    def to_json(self, runtime: bool = True) -> str:
        return json.dumps(self.to_dict(runtime), indent=2, sort_keys=True)

    def merged(self, overrides: dict) -> "RunConfig":
        """Copy with values from a (possibly nested) dict; unknown keys are errors."""
        top = {f.name for f in fields(self)}
        changes = {}
        for key, value in overrides.items():
            if value is None:
                continue
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be a mapping")
                section = getattr(self, key)
                names = {f.name for f in fields(section)}
                bad = set(value) - names
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                try:
                    changes[key] = replace(section, **value)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
            elif key in top:
                changes[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            return replace(self, **changes)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    if not os.path.exists(path):
        raise ConfigError(f"no such config file: {path}")
    with open(path) as fh:
        try:
            data = yaml.load(fh, Loader=_Loader) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    data.pop("version", None)
    return base.merged(data)
