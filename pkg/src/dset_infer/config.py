"""TOML experiment configuration.

A config names an experiment, its penalty (``rho`` or a budget ``D``, never
both), sampler settings and an output directory.  Unknown experiments are
``custom`` and must spell out ``[model]`` and ``[set]`` themselves.

    experiment = "ridge_ball"
    output_dir = "out/ridge"

    [penalty]
    flavor = "squared"
    rho = 1000.0

    [hmc]
    num_warmup = 1000
    num_samples = 1000
    num_chains = 2
    seed = 7
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .exceptions import ConfigError
from .hmc import HmcConfig

__all__ = ["ExperimentConfig", "load_config", "loads_config", "dumps_config", "EXPERIMENTS", "OUTPUT_ENV"]

EXPERIMENTS = ("ridge_ball", "robust_vmf", "contingency_table", "custom")
OUTPUT_ENV = "DSET_INFER_OUTPUT_DIR"
_TOP_KEYS = {"experiment", "output_dir", "penalty", "hmc", "model", "set", "options", "map"}


@dataclass
class ExperimentConfig:
    experiment: str
    output_dir: str = "out"
    penalty: dict = field(default_factory=dict)
    hmc: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    set: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    map: dict = field(default_factory=dict)
    base_dir: str = "."

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        has_rho = "rho" in self.penalty
        has_budget = "budget" in self.penalty
        if has_rho == has_budget:
            raise ConfigError("[penalty] needs exactly one of 'rho' or 'budget'")
        if has_budget and not float(self.penalty["budget"]) > 0:
            raise ConfigError("budget must be positive")
        if self.experiment == "custom" and not (self.model and self.set):
            raise ConfigError("custom experiments need [model] and [set] sections")
        try:
            self.hmc_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[hmc]: {exc}") from None
        for key in ("counts_file",):
            path = self.model.get(key) or self.options.get(key)
            if path and not self.resolve(path).exists():
                raise ConfigError(f"data file not found: {path}")

    @property
    def calibration_mode(self):
        return "budget" in self.penalty

    @property
    def flavor(self):
        return self.penalty.get("flavor", "squared")

    def hmc_config(self, **overrides) -> HmcConfig:
        return HmcConfig(**{**self.hmc, **overrides})

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def output_path(self) -> Path:
        env = os.environ.get(OUTPUT_ENV)
        return Path(env) if env else self.resolve(self.output_dir)

    def to_dict(self):
        out = {"experiment": self.experiment, "output_dir": self.output_dir}
        for key in ("penalty", "hmc", "model", "set", "options", "map"):
            val = getattr(self, key)
            if val:
                out[key] = val
        return out


def _from_dict(data, base_dir="."):
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    if "experiment" not in data:
        raise ConfigError("missing 'experiment'")
    return ExperimentConfig(base_dir=str(base_dir), **data)


def loads_config(text, base_dir=".") -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return _from_dict(data, base_dir)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return loads_config(path.read_text(), base_dir=path.parent)


def dumps_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())
