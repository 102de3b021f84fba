"""Run configuration: TOML file, ``ECOPLATOON_*`` environment overrides, flags.

Keys are flat and dotted, e.g. ``train.seed`` or ``scenario.idm.v0``. In a
TOML file they may be written as sections (``[train]`` then ``seed = 3``).
An environment variable ``ECOPLATOON_TRAIN__SEED=3`` overrides the file;
``--set``-style overrides passed to :func:`load_config` win over both.

Recognized keys beyond the parameter dataclasses:

``run.id``                 run directory name (default: ``<ablation>-s<seed>``)
``run.trajectory``         built-in profile name or a ``t,v`` CSV path
``run.trajectory_params``  keyword table for a built-in profile
``run.eval_trajectories``  list of profile names or CSV paths
``run.penetration``        CAV share of ``run.fleet_size`` vehicles (0 = keep counts)
``run.fleet_size``         fixed fleet size for penetration sweeps (201)
``metrics.x_star``         throughput location (default: midpoint of the travelled span)
``metrics.warmup``         warm-up fraction dropped from the throughput window
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .graph import StWeightParams
from .reward import EnergyParams, RewardParams
from .rl.encoder import Ablation
from .rl.train import Setup, TrainConfig
from .sim import ConfigError, IdmParams, SafetyParams, ScenarioConfig
from .trajectories import LeaderTrajectory, profile, read_csv

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ENV_PREFIX = "ECOPLATOON_"
DEFAULT_FLEET = 201


@dataclass
class RunSettings:
    id: str | None = None
    trajectory: str = "integrated"
    trajectory_params: dict = field(default_factory=dict)
    eval_trajectories: list = field(default_factory=lambda: ["integrated", "high-speed", "low-speed", "rapid-accel", "emergency-brake"])
    penetration: float = 0.0
    fleet_size: int = DEFAULT_FLEET


@dataclass
class MetricSettings:
    x_star: float | None = None
    warmup: float = 0.1


@dataclass
class RunConfig:
    """Everything a command needs; :attr:`flat` is the resolved key table."""

    setup: Setup
    run: RunSettings
    metrics: MetricSettings
    flat: dict

    @property
    def ablation(self) -> Ablation:
        return self.setup.train.ablation

    @property
    def seed(self) -> int:
        return self.setup.train.seed

    @property
    def run_id(self) -> str:
        return self.run.id or f"{self.ablation.value}-s{self.seed}"

    def config_hash(self) -> str:
        return config_hash(self.flat)

    def trajectory(self, source=None) -> LeaderTrajectory:
        source = self.run.trajectory if source is None else source
        params = self.run.trajectory_params if source == self.run.trajectory else {}
        return load_trajectory(source, **params)

    def with_overrides(self, **overrides) -> "RunConfig":
        return build_config({**self.flat, **overrides})


def load_trajectory(source: str, **params) -> LeaderTrajectory:
    p = Path(source)
    if p.suffix == ".csv" or p.exists():
        if not p.exists():
            raise ConfigError(f"trajectory file not found: {source}")
        return read_csv(p)
    try:
        return profile(source, **params)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"run.trajectory: unknown profile {source!r}") from exc


# key schema ------------------------------------------------------------------


def _fields(cls, prefix, nested=None):
    out = {}
    nested = nested or {}
    for f in dataclasses.fields(cls):
        if f.name in nested:
            out.update(_fields(nested[f.name], f"{prefix}{f.name}."))
        else:
            out[f"{prefix}{f.name}"] = f
    return out


SCHEMA = {
    **_fields(ScenarioConfig, "scenario.", {"idm": IdmParams, "safety": SafetyParams}),
    **_fields(TrainConfig, "train."),
    **_fields(RewardParams, "reward."),
    **_fields(EnergyParams, "energy."),
    **_fields(StWeightParams, "st."),
    **_fields(RunSettings, "run."),
    **_fields(MetricSettings, "metrics."),
}


def defaults() -> dict:
    """The full flat key table with default values."""
    out = {}
    for key, f in SCHEMA.items():
        if f.default is not dataclasses.MISSING:
            val = f.default
        else:
            val = f.default_factory()
        out[key] = getattr(val, "value", val)
    return out


def flatten(tree: dict, prefix="") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and key not in SCHEMA:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def parse_value(text: str) -> Any:
    """A TOML scalar/array literal, or the raw string when it does not parse."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, text in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            out[key] = parse_value(text)
    return out


def read_file(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        with p.open("rb") as fh:
            return flatten(tomllib.load(fh))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(flat: dict) -> str:
    blob = json.dumps(flat, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _coerce(key, value, f):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if value is None:
            if "None" not in kind:
                raise TypeError("null not allowed")
            return None
        if kind.startswith("int"):
            if isinstance(value, float) and value.is_integer():
                value = int(value)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError(f"expected an integer, got {value!r}")
            return value
        if kind.startswith("float"):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise TypeError(f"expected a number, got {value!r}")
            return float(value)
        if kind == "tuple":
            return tuple(float(x) for x in value)
        return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def build_config(flat: dict) -> RunConfig:
    """Validate a flat key table (missing keys take defaults) into a :class:`RunConfig`."""
    unknown = sorted(set(flat) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config key: {unknown[0]}")
    resolved = defaults()
    for key, value in flat.items():
        resolved[key] = _coerce(key, value, SCHEMA[key])

    def section(prefix):
        return {k[len(prefix):]: v for k, v in resolved.items() if k.startswith(prefix) and "." not in k[len(prefix):]}

    def make(cls, prefix, **extra):
        try:
            return cls(**section(prefix), **extra)
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            raise ConfigError(msg if prefix in msg else f"{prefix.rstrip('.')}: {msg}") from exc

    run = make(RunSettings, "run.")
    if not 0 <= run.penetration <= 1:
        raise ConfigError("run.penetration must lie in [0, 1]")
    idm = make(IdmParams, "scenario.idm.")
    safety = make(SafetyParams, "scenario.safety.")
    scen_kw = section("scenario.")
    if run.penetration > 0:
        scen_kw["n_groups"] = max(1, round(run.penetration * run.fleet_size))
        scen_kw["total_vehicles"] = run.fleet_size
    try:
        scenario = ScenarioConfig(**scen_kw, idm=idm, safety=safety)
        scenario.group_sizes()
    except ConfigError as exc:
        raise ConfigError(f"scenario: {exc}") from exc
    try:
        ablation = Ablation(resolved["train.ablation"])
    except ValueError as exc:
        raise ConfigError(f"train.ablation: unknown tag {resolved['train.ablation']!r}") from exc
    train = make(TrainConfig, "train.")
    train.ablation = ablation
    energy = make(EnergyParams, "energy.")
    if abs(energy.timestep - scenario.dt) > 1e-12:
        raise ConfigError("energy.timestep must equal scenario.dt")
    setup = Setup(
        scenario=scenario,
        train=train,
        reward=make(RewardParams, "reward."),
        energy=energy,
        st=make(StWeightParams, "st."),
    )
    return RunConfig(setup, run, make(MetricSettings, "metrics."), resolved)


def load_config(path=None, environ=None, overrides: dict | None = None) -> RunConfig:
    """File < environment < explicit overrides."""
    flat = read_file(path) if path is not None else {}
    flat.update(env_overrides(environ))
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(flat)
