"""YAML config loading for :class:`~batchdenoise.experiments.ExperimentConfig`.

Layout (every key optional; omitted keys keep their defaults)::

    seed: 0
    K: 20
    deadline_range: [7, 20]        # seconds
    efficiency_range: [5, 10]      # bit/s/Hz
    total_bandwidth: 40000         # Hz
    content_size: 24576            # bits
    replications: 10
    fixed_batch_size: null         # null -> floor(K/2)
    delay_model:   {a: 0.0240, b: 0.3543}
    quality_model: {alpha: 57.0, beta: 0.75, gamma: 3.5, q_outage: 400.0}
    pso: {swarm_size: 50, iterations: 100, inertia: 0.7, c1: 1.5, c2: 1.5,
          velocity_clamp: 0.2, seed: 0}
    sweep:  {k_values: [5, 10, 15, 20, 25], tau_min_values: [1, 4, 7, 10]}
    oracle: {K: 2, horizon: 8}
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Any

import yaml

from batchdenoise.bandwidth import PsoParams
from batchdenoise.experiments import ExperimentConfig
from batchdenoise.model import DelayModel, QualityModel


class ConfigError(Exception):
    """Base class for config problems."""


class ConfigNotFound(ConfigError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigValueError(ConfigError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


_TOP_SCALARS = {
    "seed": int,
    "K": int,
    "total_bandwidth": float,
    "content_size": float,
    "replications": int,
}
_SECTIONS = {
    "delay_model": (DelayModel, {"a": float, "b": float}),
    "quality_model": (
        QualityModel,
        {"alpha": float, "beta": float, "gamma": float, "q_outage": float},
    ),
    "pso": (
        PsoParams,
        {
            "swarm_size": int,
            "iterations": int,
            "inertia": float,
            "c1": float,
            "c2": float,
            "velocity_clamp": float,
            "seed": int,
        },
    ),
}


def _coerce(key: str, value: Any, kind: type):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValueError(key, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigValueError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _pair(key: str, value: Any) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigValueError(key, f"expected [min, max], got {value!r}")
    lo, hi = (_coerce(f"{key}[{i}]", v, float) for i, v in enumerate(value))
    if lo > hi:
        raise ConfigValueError(key, f"min {lo} exceeds max {hi}")
    return lo, hi


def _number_list(key: str, value: Any, kind: type) -> tuple:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigValueError(key, f"expected a non-empty list, got {value!r}")
    return tuple(_coerce(f"{key}[{i}]", v, kind) for i, v in enumerate(value))


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigValueError(name, "expected a mapping")
    return sec


def config_from_dict(raw: dict | None) -> ExperimentConfig:
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigValueError("<root>", "config must be a mapping")
    known = set(_TOP_SCALARS) | set(_SECTIONS) | {
        "deadline_range",
        "efficiency_range",
        "fixed_batch_size",
        "sweep",
        "oracle",
    }
    for key in raw:
        if key not in known:
            raise ConfigValueError(str(key), "unknown key")

    kwargs: dict[str, Any] = {}
    for key, kind in _TOP_SCALARS.items():
        if key in raw:
            kwargs[key] = _coerce(key, raw[key], kind)
    for key in ("deadline_range", "efficiency_range"):
        if key in raw:
            kwargs[key] = _pair(key, raw[key])
    if raw.get("fixed_batch_size") is not None:
        kwargs["fixed_batch_size"] = _coerce("fixed_batch_size", raw["fixed_batch_size"], int)

    for name, (cls, fields) in _SECTIONS.items():
        sec = _section(raw, name)
        values = {}
        for key, value in sec.items():
            if key not in fields:
                raise ConfigValueError(f"{name}.{key}", "unknown key")
            values[key] = _coerce(f"{name}.{key}", value, fields[key])
        try:
            kwargs[name] = cls(**values)
        except ValueError as exc:
            raise ConfigValueError(name, str(exc)) from None

    sweep = _section(raw, "sweep")
    for key in sweep:
        if key not in ("k_values", "tau_min_values"):
            raise ConfigValueError(f"sweep.{key}", "unknown key")
    if "k_values" in sweep:
        kwargs["k_values"] = _number_list("sweep.k_values", sweep["k_values"], int)
    if "tau_min_values" in sweep:
        kwargs["tau_min_values"] = _number_list("sweep.tau_min_values", sweep["tau_min_values"], float)

    oracle = _section(raw, "oracle")
    for key in oracle:
        if key not in ("K", "horizon"):
            raise ConfigValueError(f"oracle.{key}", "unknown key")
    if "K" in oracle:
        kwargs["oracle_K"] = _coerce("oracle.K", oracle["K"], int)
    if "horizon" in oracle:
        kwargs["oracle_horizon"] = _coerce("oracle.horizon", oracle["horizon"], int)

    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        field = next((f.name for f in dataclasses.fields(ExperimentConfig) if msg.startswith(f.name)), "<root>")
        raise ConfigValueError(field, msg) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw)
