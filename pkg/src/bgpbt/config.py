"""Experiment configuration: parsing, validation, overrides and serialization."""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .search_space import SpaceError, space_from_spec


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending dotted path."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


@dataclass(frozen=True)
class TReadySchedule:
    mode: str = "constant"
    start: int = 1
    end: int = 1
    horizon: int | None = None
    granularity: int = 1

    def validate(self, prefix: str = "scheduler.t_ready") -> None:
        if self.mode not in ("constant", "linear"):
            raise ConfigError(f"{prefix}.mode", "must be 'constant' or 'linear'")
        if self.start <= 0 or self.end <= 0:
            raise ConfigError(f"{prefix}.start", "t_ready values must be positive")
        if self.mode == "linear" and self.end > self.start:
            raise ConfigError(f"{prefix}.end", "anneal end must not exceed start")
        if self.granularity <= 0:
            raise ConfigError(f"{prefix}.granularity", "must be positive")


@dataclass(frozen=True)
class SchedulerConfig:
    population_size: int = 8
    q: float = 12.5
    t_ready: TReadySchedule = field(default_factory=TReadySchedule)
    t_max: int = 150
    patience: int = 20
    generation_budget: int = 40
    init_pool: int | None = None
    distill_budget: int = 30
    n_candidates: int | None = None
    n_bo_arch: int = 4

    @property
    def init_pool_size(self) -> int:
        return self.init_pool if self.init_pool is not None else 3 * self.population_size

    @property
    def candidate_count(self) -> int:
        return self.n_candidates if self.n_candidates is not None else 3 * self.population_size

    def validate(self) -> None:
        if self.population_size < 1:
            raise ConfigError("scheduler.population_size", "must be >= 1")
        if not 0 < self.q <= 50:
            raise ConfigError("scheduler.q", "must lie in (0, 50]")
        if self.t_max < 1:
            raise ConfigError("scheduler.t_max", "must be >= 1")
        if self.patience < 1:
            raise ConfigError("scheduler.patience", "must be >= 1")
        if self.generation_budget < 1:
            raise ConfigError("scheduler.generation_budget", "must be >= 1")
        if self.init_pool_size < self.population_size:
            raise ConfigError("scheduler.init_pool", "must be >= population_size")
        if self.candidate_count < self.population_size:
            raise ConfigError("scheduler.n_candidates", "must be >= population_size")
        if self.distill_budget < 1:
            raise ConfigError("scheduler.distill_budget", "must be >= 1")
        if not 0 <= self.n_bo_arch <= self.candidate_count:
            raise ConfigError("scheduler.n_bo_arch", "must lie in [0, n_candidates]")
        self.t_ready.validate()


@dataclass(frozen=True)
class TrustRegionSettings:
    multiplier: float = 1.5
    succ_tol: int = 3
    fail_tol: int = 10
    min_x: float = 0.15
    min_h: float = 0.1
    init_x: float = 0.4
    init_h: float = 1.0


@dataclass(frozen=True)
class OptimizerConfig:
    enable_nas: bool = True
    enable_trust_region: bool = True
    explore: str = "bo"
    target: str = "auto"
    gp_restarts: int = 2
    gp_maxiter: int = 100
    max_points: int | None = 128
    beta_scale: float = 1.0
    beta_delta: float = 0.1
    acq_starts: int = 4
    acq_budget: int = 64
    trust_region: TrustRegionSettings = field(default_factory=TrustRegionSettings)

    def validate(self) -> None:
        if self.explore not in ("bo", "random"):
            raise ConfigError("optimizer.explore", "must be 'bo' or 'random'")
        if self.target not in ("auto", "return", "improvement"):
            raise ConfigError("optimizer.target", "must be 'auto', 'return' or 'improvement'")
        if self.gp_restarts < 1:
            raise ConfigError("optimizer.gp_restarts", "must be >= 1")
        if self.gp_maxiter < 1:
            raise ConfigError("optimizer.gp_maxiter", "must be >= 1")
        if self.max_points is not None and self.max_points < 2:
            raise ConfigError("optimizer.max_points", "must be >= 2 or null")
        if self.beta_scale < 0:
            raise ConfigError("optimizer.beta_scale", "must be non-negative")
        if not 0 < self.beta_delta < 1:
            raise ConfigError("optimizer.beta_delta", "must lie in (0, 1)")
        if self.acq_starts < 1 or self.acq_budget < 1:
            raise ConfigError("optimizer.acq_starts", "acquisition starts and budget must be >= 1")


@dataclass(frozen=True)
class ObjectiveSpec:
    name: str
    params: Mapping[str, Any] = field(default_factory=dict)


METHODS = {
    "bgpbt": {"enable_nas": True, "enable_trust_region": True, "explore": "bo"},
    "no_nas": {"enable_nas": False, "enable_trust_region": True, "explore": "bo"},
    "pb2": {"enable_nas": False, "enable_trust_region": False, "explore": "bo"},
    "pbt": {"enable_nas": False, "enable_trust_region": False, "explore": "random"},
    "random_search": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    space: Any
    objective: ObjectiveSpec
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seeds: tuple[int, ...] = (0,)
    output: str | None = None
    methods: tuple[str, ...] = ("random_search", "pb2", "no_nas", "bgpbt")
    grid_points: int = 21

    def build_space(self):
        try:
            return space_from_spec(self.space)
        except (SpaceError, OSError) as exc:
            raise ConfigError("space", str(exc)) from exc

    def to_dict(self) -> dict:
        d = asdict(self)
        d["objective"] = {"name": self.objective.name, "params": dict(self.objective.params)}
        d["seeds"] = list(self.seeds)
        d["methods"] = list(self.methods)
        return json.loads(json.dumps(d))

    def with_method(self, method: str) -> ExperimentConfig:
        if method not in METHODS:
            raise ConfigError("methods", f"unknown method {method!r}")
        opt = OptimizerConfig(**{**_shallow(self.optimizer), **METHODS[method]})
        return ExperimentConfig(**{**_shallow(self), "optimizer": opt})


def _shallow(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def _build(cls, data: Any, prefix: str, nested: Mapping[str, type] | None = None):
    nested = nested or {}
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(prefix, "must be a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{prefix}.{sorted(unknown)[0]}", "unknown field")
    kwargs = {}
    for key, value in data.items():
        if key in nested:
            kwargs[key] = _build(nested[key], value, f"{prefix}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from exc


def _check_types(obj, prefix: str) -> None:
    for f in fields(obj):
        value = getattr(obj, f.name)
        if hasattr(value, "__dataclass_fields__"):
            _check_types(value, f"{prefix}.{f.name}")
            continue
        kind = str(f.type)
        path = f"{prefix}.{f.name}"
        if value is None and "None" in kind:
            continue
        if kind.startswith("int") and (isinstance(value, bool) or not isinstance(value, int)):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        if kind.startswith("float") and (isinstance(value, bool) or not isinstance(value, (int, float))):
            raise ConfigError(path, f"expected a number, got {value!r}")
        if kind == "bool" and not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")


def parse_config(data: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a raw mapping and build an :class:`ExperimentConfig`."""
    if not isinstance(data, Mapping):
        raise ConfigError("<root>", "config must be a mapping")
    allowed = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    for required in ("space", "objective"):
        if required not in data or data[required] is None:
            raise ConfigError(required, "missing required field")
    obj = data["objective"]
    if isinstance(obj, str):
        obj = {"name": obj}
    if not isinstance(obj, Mapping) or "name" not in obj:
        raise ConfigError("objective.name", "missing required field")
    objective = _build(ObjectiveSpec, obj, "objective")
    if not isinstance(objective.params, Mapping):
        raise ConfigError("objective.params", "must be a mapping")
    scheduler = _build(SchedulerConfig, data.get("scheduler"), "scheduler", {"t_ready": TReadySchedule})
    optimizer = _build(OptimizerConfig, data.get("optimizer"), "optimizer", {"trust_region": TrustRegionSettings})
    _check_types(scheduler, "scheduler")
    _check_types(optimizer, "optimizer")
    scheduler.validate()
    optimizer.validate()
    seeds = data.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = [seeds]
    if not isinstance(seeds, (list, tuple)) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("seeds", "must be a non-empty list of integers")
    methods = data.get("methods", list(ExperimentConfig.methods))
    if not isinstance(methods, (list, tuple)) or not methods:
        raise ConfigError("methods", "must be a non-empty list")
    for m in methods:
        if m not in METHODS:
            raise ConfigError("methods", f"unknown method {m!r}; choose from {sorted(METHODS)}")
    grid_points = data.get("grid_points", 21)
    if not isinstance(grid_points, int) or grid_points < 2:
        raise ConfigError("grid_points", "must be an integer >= 2")
    cfg = ExperimentConfig(
        space=copy.deepcopy(data["space"]),
        objective=ObjectiveSpec(objective.name, dict(objective.params)),
        scheduler=scheduler,
        optimizer=optimizer,
        seeds=tuple(seeds),
        output=data.get("output"),
        methods=tuple(methods),
        grid_points=grid_points,
    )
    cfg.build_space()
    from .benchmarks import make_objective

    try:
        make_objective(cfg.objective.name, cfg.objective.params, cfg.build_space(), seed=0)
    except (TypeError, ValueError) as exc:
        raise ConfigError("objective", str(exc)) from exc
    return cfg


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as YAML scalars."""
    data = copy.deepcopy(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = data
        parts = key.strip().split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = value
    return data


def load_raw(path: str | Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".json"):
        data = json.loads(text)
    else:
        data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config file must contain a mapping")
    return data


def load_config(path: str | Path, overrides: list[str] | None = None) -> ExperimentConfig:
    return parse_config(apply_overrides(load_raw(path), overrides or []))


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "METHODS",
    "ObjectiveSpec",
    "OptimizerConfig",
    "SchedulerConfig",
    "TReadySchedule",
    "TrustRegionSettings",
    "apply_overrides",
    "dump_config",
    "load_config",
    "parse_config",
]
