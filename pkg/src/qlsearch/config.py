"""Run configuration: strict JSON schema, reference defaults, flags-over-file merging."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConflictError, SchemaError
from .params import DEFAULT_RABI, PhysicalParams, db_to_r, r_to_db


@dataclass
class PhysicsConfig:
    rabi_frequency: float = DEFAULT_RABI
    lamb_dicke: float = 0.1
    decay_time_T: float = 50.0
    heating_time_T: float = 600.0
    fock_cutoff: int = 30
    squeezing_db: float = 0.0
    squeezing_angle: float = math.pi

    def params(self) -> PhysicalParams:
        return PhysicalParams.from_dimensionless(
            rabi_frequency=self.rabi_frequency, decay_time_T=self.decay_time_T,
            heating_time_T=self.heating_time_T, lamb_dicke=self.lamb_dicke,
            fock_cutoff=self.fock_cutoff, squeezing=db_to_r(self.squeezing_db),
            squeezing_angle=self.squeezing_angle)


@dataclass
class LineshapeConfig:
    time: float = 35.0
    grid: str = "-15:15:0.25"
    method: str = "expm"


@dataclass
class StatisticsConfig:
    bins: int = 5
    shots: int = 8
    time: float = 35.0
    step: float = 5.0
    threshold: float = 0.0
    spam: float = 0.0
    mode: str = "exact"
    samples: int = 200_000
    eps1: float = 0.01
    eps2: float = 0.01


@dataclass
class OptimizerConfig:
    bins: int = 1
    spam: float = 0.0
    eps1: float = 0.01
    eps2: float = 0.01
    shots: list = field(default_factory=lambda: list(range(1, 33)))
    times: list = field(default_factory=lambda: [5.0 * k for k in range(1, 21)])
    steps: list = field(default_factory=lambda: [0.5 * k for k in range(1, 31)])
    squeezing_db: list = field(default_factory=lambda: [0.0])
    refine: bool = True
    time_offset: float = 0.0
    mode: str = "exact"
    coarse: bool = False


@dataclass
class RunConfig:
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    lineshape: LineshapeConfig = field(default_factory=LineshapeConfig)
    statistics: StatisticsConfig = field(default_factory=StatisticsConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    output: str = "results"
    seed: int = 0
    cache_root: str | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self, *extra) -> str:
        blob = json.dumps([self.to_dict(), *extra], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


_CHOICES = {
    "lineshape.method": ("expm", "rk"),
    "statistics.mode": ("exact", "mc"),
    "optimizer.mode": ("exact", "mc"),
}


def _check_scalar(path, value, default):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(path, f"expected a boolean, got {value!r}")
    elif isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(path, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(path, f"expected a number, got {value!r}")
        value = float(value)
    elif isinstance(default, str) or default is None:
        if value is not None and not isinstance(value, str):
            raise SchemaError(path, f"expected a string, got {value!r}")
    elif isinstance(default, list):
        if not isinstance(value, list) or not value:
            raise SchemaError(path, f"expected a non-empty list, got {value!r}")
        kind = type(default[0]) if default else float
        for i, item in enumerate(value):
            _check_scalar(f"{path}[{i}]", item, kind(0) if kind is not bool else False)
        value = [float(v) for v in value] if kind is float else list(value)
    if path in _CHOICES and value not in _CHOICES[path]:
        raise SchemaError(path, f"must be one of {_CHOICES[path]}, got {value!r}")
    return value


def _apply(obj, data: dict, prefix: str = ""):
    if not isinstance(data, dict):
        raise SchemaError(prefix.rstrip("."), "expected an object")
    fields = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        path = prefix + key
        if key not in fields:
            raise SchemaError(path, "unknown key")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _apply(current, value, path + ".")
        else:
            setattr(obj, key, _check_scalar(path, value, current))


def _validate(cfg: RunConfig):
    try:
        cfg.physics.params()
    except ValueError as exc:
        raise SchemaError("physics", str(exc)) from None
    s = cfg.statistics
    if s.bins < 1 or s.shots < 1 or s.samples < 1:
        raise SchemaError("statistics", "bins, shots and samples must be >= 1")
    for path, xi in (("statistics.spam", s.spam), ("optimizer.spam", cfg.optimizer.spam)):
        if not 0 <= xi < 0.5:
            raise SchemaError(path, "must lie in [0, 0.5)")
    for path, eps in (("statistics.eps1", s.eps1), ("statistics.eps2", s.eps2),
                      ("optimizer.eps1", cfg.optimizer.eps1), ("optimizer.eps2", cfg.optimizer.eps2)):
        if not 0 < eps <= 1:
            raise SchemaError(path, "must lie in (0, 1]")
    if s.time <= 0 or s.step <= 0 or cfg.lineshape.time <= 0:
        raise SchemaError("statistics", "times and steps must be positive")


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file at ``path``, then dotted-key ``overrides``.

    ``overrides`` maps keys such as ``"physics.squeezing_db"`` to values;
    entries whose value is None are ignored so unset CLI flags never win
    over the file.
    """
    cfg = RunConfig()
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise SchemaError("", f"{path} is not valid JSON: {exc}") from None
        _apply(cfg, data)
    nested: dict = {}
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        node = nested
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    _apply(cfg, nested)
    _validate(cfg)
    return cfg


def resolve_squeezing(db: float | None, r: float | None) -> float | None:
    """Squeezing in dB from either a dB or an ``r`` flag; both together must agree."""
    if db is not None and r is not None:
        if abs(db_to_r(db) - r) > 1e-9:
            raise ConflictError(f"--squeezing-db {db} and --squeezing-r {r} disagree")
        return db
    if r is not None:
        return r_to_db(r)
    return db
