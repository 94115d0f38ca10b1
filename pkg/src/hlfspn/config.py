"""Experiment configuration files (YAML).

Example::

    hlf:
      arrival_rate: 10        # per second
      block_timeout_ms: 2000
      commit_time_ms: 1150
      order_time_ms: 15
      endorse_time_ms: 160
      block_size: 10
      endorse_queue_size: 10
    engine:
      backend: solver         # or simulation
      replications: 20
      horizon_ms: 1000000
      base_seed: 20240601
    outputs: out/baseline
    experiment:
      metrics: {}

``experiment`` holds exactly one of ``metrics``, ``sweep`` (factor, range,
points, metric), ``rank`` (metric, points) or ``validate`` (csv,
declared_rate, samples).  The ``hlf`` keys may also be written with the
factor table names, e.g. ``"Block Size": 10``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .hlf import FACTOR_RANGES, FACTORS, HlfParams
from .metrics import SolverOptions
from .simulation import SimConfig

EXPERIMENTS = ("metrics", "sweep", "rank", "validate")

ENGINE_DEFAULTS: dict[str, Any] = {
    "backend": "solver",
    "horizon_ms": 1e6,
    "warmup_ms": None,
    "replications": 20,
    "base_seed": 20240601,
    "tol": 1e-12,
    "max_iter": 100_000,
    "state_cap": 5_000_000,
    "method": "gauss-seidel",
    "effective_rate": False,
    "p1_capacity": 12,
    "block_capacity": 15,
    "workers": None,
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    hlf: HlfParams
    engine: dict[str, Any]
    outputs: Path
    experiment: str
    options: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict)

    @property
    def backend(self) -> str:
        return self.engine["backend"]

    @property
    def sim(self) -> SimConfig:
        e = self.engine
        return SimConfig(horizon_ms=float(e["horizon_ms"]),
                         warmup_ms=None if e["warmup_ms"] is None else float(e["warmup_ms"]),
                         replications=int(e["replications"]), base_seed=int(e["base_seed"]))

    @property
    def solver(self) -> SolverOptions:
        e = self.engine
        return SolverOptions(int(e["state_cap"]), float(e["tol"]), int(e["max_iter"]), e["method"])

    def digest(self) -> str:
        """Hash of the experiment definition; the output directory is left out."""
        content = {k: v for k, v in self.raw.items() if k != "outputs"}
        canonical = json.dumps(content, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()


def _hlf(section: Any) -> dict[str, Any]:
    if not isinstance(section, dict):
        raise ConfigError("hlf: expected a mapping of factor values")
    data = {}
    for key, value in section.items():
        attr = FACTORS.get(key, key)
        if attr not in FACTORS.values():
            raise ConfigError(f"hlf.{key}: unknown field; expected one of {', '.join(FACTORS.values())}")
        data[attr] = value
    missing = [a for a in FACTORS.values() if a not in data]
    if missing:
        raise ConfigError(f"missing field: hlf.{missing[0]}")
    return data


def set_path(data: dict, dotted: str, value: Any) -> None:
    """Apply a ``section.key=value`` override in place."""
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def parse_config(data: Any, overrides: list[str] = (), experiment: str | None = None) -> ExperimentConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = copy.deepcopy(data)
    for item in overrides:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r}: expected key=value")
        set_path(data, key.strip(), yaml.safe_load(text))
    if "hlf" not in data:
        raise ConfigError("missing field: hlf")
    hlf_data = _hlf(data["hlf"])

    engine = dict(ENGINE_DEFAULTS)
    given = data.get("engine") or {}
    if not isinstance(given, dict):
        raise ConfigError("engine: expected a mapping")
    for key, value in given.items():
        if key not in ENGINE_DEFAULTS:
            raise ConfigError(f"engine.{key}: unknown field")
        engine[key] = value
    if engine["backend"] not in ("solver", "simulation"):
        raise ConfigError(f"engine.backend: expected solver or simulation, got {engine['backend']!r}")
    try:
        params = HlfParams(**hlf_data, p1_capacity=engine["p1_capacity"],
                           block_capacity=engine["block_capacity"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"hlf: {exc}") from None
    try:
        SimConfig(horizon_ms=float(engine["horizon_ms"]), replications=int(engine["replications"]),
                  warmup_ms=None if engine["warmup_ms"] is None else float(engine["warmup_ms"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"engine: {exc}") from None

    exp_section = data.get("experiment") or {}
    if not isinstance(exp_section, dict):
        raise ConfigError("experiment: expected a mapping")
    chosen = [k for k in exp_section if k in EXPERIMENTS]
    unknown = [k for k in exp_section if k not in EXPERIMENTS]
    if unknown:
        raise ConfigError(f"experiment.{unknown[0]}: unknown experiment; expected one of {EXPERIMENTS}")
    if experiment is None:
        if len(chosen) != 1:
            raise ConfigError("experiment: select exactly one of " + ", ".join(EXPERIMENTS))
        experiment = chosen[0]
    options = dict(exp_section.get(experiment) or {})
    _check_options(experiment, options)
    return ExperimentConfig(params, engine, Path(data.get("outputs", "out")), experiment, options, data)


def _check_options(experiment: str, options: dict) -> None:
    if experiment == "sweep":
        factor = options.get("factor")
        if factor not in FACTOR_RANGES:
            raise ConfigError(f"experiment.sweep.factor: expected one of {list(FACTOR_RANGES)}, got {factor!r}")
        rng = options.get("range")
        if rng is not None and (not isinstance(rng, list) or len(rng) != 2):
            raise ConfigError("experiment.sweep.range: expected [min, max]")
        if int(options.get("points", 8)) < 2:
            raise ConfigError("experiment.sweep.points: must be >= 2")
    elif experiment == "validate" and not options.get("csv"):
        options.setdefault("csv", None)


def load_config(path, overrides: list[str] = (), experiment: str | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}:{where} {getattr(exc, 'problem', exc)}") from None
    try:
        return parse_config(data, overrides, experiment)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
