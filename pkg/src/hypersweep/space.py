"""Search-space, experiment-config and job-config types plus their JSON codecs.

The experiment configuration is a single JSON document; the job
configuration handed to a user script is a flat JSON object: one top-level
key per hyperparameter plus ``job_id`` and, for budget-aware proposers,
``n_iterations`` and extra bookkeeping keys.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping

from .errors import ConfigError

PROPOSERS = ("random", "grid", "gp_ei", "tpe", "hyperband", "bohb")
RESOURCE_TYPES = ("cpu", "gpu", "node", "passive")
TARGETS = ("min", "max")
PARAM_KINDS = ("float", "int", "choice")

# Option keys accepted per proposer; random_seed is valid everywhere.
_COMMON_OPTIONS = frozenset({"random_seed"})
PROPOSER_OPTIONS: dict[str, frozenset[str]] = {
    "random": _COMMON_OPTIONS,
    "grid": _COMMON_OPTIONS | {"max_grid_size"},
    "gp_ei": _COMMON_OPTIONS | {"n_candidates", "n_restarts"},
    "tpe": _COMMON_OPTIONS | {"gamma", "n_startup", "n_candidates", "engine"},
    "hyperband": _COMMON_OPTIONS | {"max_budget", "min_budget", "eta"},
    "bohb": _COMMON_OPTIONS
    | {"max_budget", "min_budget", "eta", "rho", "min_points", "gamma", "n_startup", "n_candidates"},
}

# Reserved keys in the flat job-config document that are never parameter names.
RESERVED_JOB_KEYS = ("job_id", "n_iterations")


@dataclass(frozen=True)
class ParameterSpec:
    """One dimension of the search space.

    ``kind`` is "float", "int" or "choice".  For float/int, ``low``/``high``
    bound a closed interval; for choice, ``choices`` is the ordered value
    list.  ``grid_n`` is only consulted by the grid proposer.
    """

    name: str
    kind: str
    low: float | None = None
    high: float | None = None
    choices: tuple[Any, ...] = ()
    grid_n: int | None = None

    def __post_init__(self):
        if not self.name:
            raise ConfigError("bad-value", "parameter name must be non-empty")
        if self.kind not in PARAM_KINDS:
            raise ConfigError("bad-value", f"unknown parameter kind {self.kind!r}")
        if self.kind == "choice":
            if not self.choices:
                raise ConfigError("bad-range", f"parameter {self.name!r}: choice list is empty")
        else:
            if self.low is None or self.high is None:
                raise ConfigError("bad-range", f"parameter {self.name!r}: range missing")
            if self.low > self.high:
                raise ConfigError(
                    "bad-range",
                    f"parameter {self.name!r}: inverted range [{self.low}, {self.high}]",
                )
            if self.kind == "int" and not (
                float(self.low).is_integer() and float(self.high).is_integer()
            ):
                raise ConfigError(
                    "bad-range", f"parameter {self.name!r}: int bounds must be integers"
                )
        if self.grid_n is not None and self.grid_n < 1:
            raise ConfigError("bad-value", f"parameter {self.name!r}: grid_n must be positive")

    def contains(self, value: Any) -> bool:
        if self.kind == "choice":
            return any(value == c and type(value) is type(c) for c in self.choices)
        if self.kind == "int":
            return isinstance(value, int) and not isinstance(value, bool) and self.low <= value <= self.high
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        return math.isfinite(value) and self.low <= value <= self.high

    def coerce(self, value: Any) -> Any:
        """Validate ``value`` against this spec, normalizing ints given for floats."""
        if self.kind == "float" and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not self.contains(value):
            kindname = {"float": "float in", "int": "int in", "choice": "one of"}[self.kind]
            domain = list(self.choices) if self.kind == "choice" else [self.low, self.high]
            raise ConfigError(
                "out-of-range",
                f"parameter {self.name!r}: value {value!r} is not a {kindname} {domain}",
            )
        return value


@dataclass(frozen=True)
class SearchSpace:
    """Ordered, uniquely-named collection of ParameterSpec."""

    params: tuple[ParameterSpec, ...]

    def __post_init__(self):
        if not self.params:
            raise ConfigError("bad-value", "search space must have at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ConfigError("duplicate-name", f"duplicate parameter names: {dupes}")

    def __iter__(self) -> Iterator[ParameterSpec]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.params)

    def __getitem__(self, name: str) -> ParameterSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class JobConfig:
    """One concrete hyperparameter assignment plus bookkeeping fields."""

    values: Mapping[str, Any]
    job_id: int
    n_iterations: float | None = None
    aux: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.job_id < 0:
            raise ConfigError("bad-value", "job_id must be non-negative")
        if self.n_iterations is not None and self.n_iterations <= 0:
            raise ConfigError("bad-value", "n_iterations must be positive")

    def __eq__(self, other):
        if not isinstance(other, JobConfig):
            return NotImplemented
        return (
            dict(self.values) == dict(other.values)
            and self.job_id == other.job_id
            and self.n_iterations == other.n_iterations
            and dict(self.aux) == dict(other.aux)
        )


@dataclass(frozen=True)
class JobResult:
    """Terminal outcome of one job as reported back to the proposer."""

    job_id: int
    status: str  # finished | failed | killed
    score: float | None = None
    aux_string: str | None = None
    wall_time: float = 0.0

    def __post_init__(self):
        if self.status == "finished":
            if self.score is None or not math.isfinite(self.score):
                raise ConfigError("bad-value", "finished result requires a finite score")
        elif self.score is not None:
            raise ConfigError("bad-value", f"status {self.status!r} must not carry a score")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment."""

    proposer: str
    script: str
    resource_type: str
    space: SearchSpace
    n_samples: int
    n_parallel: int = 1
    target: str = "min"
    proposer_options: Mapping[str, Any] = field(default_factory=dict)
    workdir: str | None = None

    def __post_init__(self):
        if self.proposer not in PROPOSERS:
            raise ConfigError(
                "unknown-proposer",
                f"unknown proposer {self.proposer!r}; valid: {', '.join(PROPOSERS)}",
            )
        if self.resource_type not in RESOURCE_TYPES:
            raise ConfigError(
                "bad-value",
                f"unknown resource type {self.resource_type!r}; valid: {', '.join(RESOURCE_TYPES)}",
            )
        if self.target not in TARGETS:
            raise ConfigError("bad-value", f"target must be one of {TARGETS}")
        if self.n_parallel < 1:
            raise ConfigError("bad-value", "n_parallel must be >= 1")
        if self.n_samples < 1:
            raise ConfigError("bad-value", "n_samples must be >= 1")
        allowed = PROPOSER_OPTIONS[self.proposer]
        unknown = sorted(set(self.proposer_options) - allowed)
        if unknown:
            raise ConfigError(
                "unknown-option",
                f"proposer_options keys {unknown} not valid for {self.proposer!r} "
                f"(valid: {sorted(allowed)})",
            )
        if self.proposer in ("hyperband", "bohb") and "max_budget" not in self.proposer_options:
            raise ConfigError(
                "missing-field", f"{self.proposer!r} requires proposer_options.max_budget"
            )
        if self.proposer_options.get("engine") not in (None, "tpe"):
            raise ConfigError(
                "bad-value", f"engine must be 'tpe', got {self.proposer_options['engine']!r}"
            )

    def to_json(self) -> str:
        doc: dict[str, Any] = {
            "proposer": self.proposer,
            "script": self.script,
            "resource": self.resource_type,
            "n_parallel": self.n_parallel,
            "target": self.target,
            "parameter_config": [_param_to_doc(p) for p in self.space],
            "n_samples": self.n_samples,
        }
        if self.proposer_options:
            doc["proposer_options"] = dict(self.proposer_options)
        if self.workdir is not None:
            doc["workdir"] = self.workdir
        return json.dumps(doc, indent=2)


def _param_to_doc(p: ParameterSpec) -> dict[str, Any]:
    doc: dict[str, Any] = {"name": p.name}
    if p.kind == "choice":
        doc["range"] = list(p.choices)
    else:
        lo, hi = p.low, p.high
        if p.kind == "int":
            lo, hi = int(lo), int(hi)
        doc["range"] = [lo, hi]
    doc["type"] = p.kind
    if p.grid_n is not None:
        doc["grid_n"] = p.grid_n
    return doc


def _param_from_doc(doc: Any) -> ParameterSpec:
    if not isinstance(doc, dict):
        raise ConfigError("bad-type", f"parameter_config entries must be objects, got {doc!r}")
    for key in ("name", "range", "type"):
        if key not in doc:
            raise ConfigError("missing-field", f"parameter entry missing {key!r}: {doc!r}")
    unknown = sorted(set(doc) - {"name", "range", "type", "grid_n"})
    if unknown:
        raise ConfigError("bad-value", f"unknown parameter keys {unknown} in {doc['name']!r}")
    name, kind, rng = doc["name"], doc["type"], doc["range"]
    if not isinstance(name, str):
        raise ConfigError("bad-type", f"parameter name must be a string, got {name!r}")
    if not isinstance(rng, list):
        raise ConfigError("bad-type", f"parameter {name!r}: range must be a list")
    grid_n = doc.get("grid_n")
    if grid_n is not None and (not isinstance(grid_n, int) or isinstance(grid_n, bool)):
        raise ConfigError("bad-type", f"parameter {name!r}: grid_n must be an integer")
    if kind == "choice":
        return ParameterSpec(name=name, kind="choice", choices=tuple(rng), grid_n=grid_n)
    if len(rng) != 2:
        raise ConfigError("bad-range", f"parameter {name!r}: range must be [low, high]")
    lo, hi = rng
    for v in (lo, hi):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("bad-type", f"parameter {name!r}: bounds must be numbers")
    if kind == "int":
        if not (float(lo).is_integer() and float(hi).is_integer()):
            raise ConfigError(
                "bad-range", f"parameter {name!r}: int bounds must be integers"
            )
        return ParameterSpec(name=name, kind="int", low=int(lo), high=int(hi), grid_n=grid_n)
    return ParameterSpec(name=name, kind="float", low=float(lo), high=float(hi), grid_n=grid_n)


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment-configuration JSON document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("malformed-json", f"experiment config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("bad-type", "experiment config must be a JSON object")
    for key in ("proposer", "script", "parameter_config", "n_samples"):
        if key not in doc:
            raise ConfigError("missing-field", f"experiment config missing {key!r}")
    known = {
        "proposer",
        "script",
        "resource",
        "n_parallel",
        "target",
        "parameter_config",
        "n_samples",
        "proposer_options",
        "workdir",
    }
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError("bad-value", f"unknown experiment config keys: {unknown}")
    pc = doc["parameter_config"]
    if not isinstance(pc, list):
        raise ConfigError("bad-type", "parameter_config must be a list")
    space = SearchSpace(tuple(_param_from_doc(p) for p in pc))
    for key, typ in (("n_samples", int), ("n_parallel", int)):
        if key in doc and (isinstance(doc[key], bool) or not isinstance(doc[key], typ)):
            raise ConfigError("bad-type", f"{key} must be an integer")
    opts = doc.get("proposer_options", {})
    if not isinstance(opts, dict):
        raise ConfigError("bad-type", "proposer_options must be an object")
    if not isinstance(doc["proposer"], str):
        raise ConfigError("bad-type", "proposer must be a string")
    return ExperimentConfig(
        proposer=doc["proposer"],
        script=doc["script"],
        resource_type=doc.get("resource", "cpu"),
        space=space,
        n_samples=doc["n_samples"],
        n_parallel=doc.get("n_parallel", 1),
        target=doc.get("target", "min"),
        proposer_options=opts,
        workdir=doc.get("workdir"),
    )


def job_config_save(cfg: JobConfig, space: SearchSpace | None = None) -> str:
    """Serialize a JobConfig to the flat JSON document handed to user scripts.

    Hyperparameters come first (in search-space order when a space is given),
    then job_id, n_iterations and any aux keys.
    """
    doc: dict[str, Any] = {}
    if space is not None:
        for p in space:
            if p.name in cfg.values:
                doc[p.name] = cfg.values[p.name]
        for name, v in cfg.values.items():
            doc.setdefault(name, v)
    else:
        doc.update(cfg.values)
    doc["job_id"] = cfg.job_id
    if cfg.n_iterations is not None:
        doc["n_iterations"] = cfg.n_iterations
    for key, v in cfg.aux.items():
        if key in doc:
            raise ConfigError("duplicate-name", f"aux key {key!r} collides with another field")
        doc[key] = v
    return json.dumps(doc)


def job_config_load(text: str, space: SearchSpace) -> JobConfig:
    """Parse a flat job-config document, validating values against ``space``.

    Inverse of :func:`job_config_save`: unreserved keys that are not
    parameter names are collected into ``aux``.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("malformed-json", f"job config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("bad-type", "job config must be a JSON object")
    if "job_id" not in doc:
        raise ConfigError("missing-field", "job config missing 'job_id'")
    job_id = doc["job_id"]
    if isinstance(job_id, bool) or not isinstance(job_id, int):
        raise ConfigError("bad-type", "job_id must be an integer")
    values: dict[str, Any] = {}
    for p in space:
        if p.name not in doc:
            raise ConfigError("missing-param", f"job config missing parameter {p.name!r}")
        values[p.name] = p.coerce(doc[p.name])
    n_iterations = doc.get("n_iterations")
    if n_iterations is not None and (
        isinstance(n_iterations, bool) or not isinstance(n_iterations, (int, float))
    ):
        raise ConfigError("bad-type", "n_iterations must be a number")
    aux = {
        k: v
        for k, v in doc.items()
        if k not in values and k not in RESERVED_JOB_KEYS
    }
    return JobConfig(values=values, job_id=job_id, n_iterations=n_iterations, aux=aux)
