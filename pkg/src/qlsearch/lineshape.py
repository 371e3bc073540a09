"""Excitation profiles P0(t, delta) on a detuning grid, plus the background P_bg(t).

Tables are computed from the master equation, serialised as JSON with a
checksum, and memoised in a content-addressed on-disk cache.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from filelock import FileLock

from . import dynamics
from .errors import CorruptCacheEntry, NoPeak, OutOfRange, TruncationWarning
from .params import PhysicalParams

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CACHE_ENV = "QLSEARCH_CACHE_DIR"
FAR_DETUNED_TOL = 0.05
NO_PEAK_THRESHOLD = 1e-4


@dataclass(frozen=True)
class DetuningGrid:
    """Uniform grid ``lo, lo + step, ..., hi`` in units of Omega."""

    lo: float = -15.0
    hi: float = 15.0
    step: float = 0.25

    def __post_init__(self):
        if not (self.step > 0 and self.hi >= self.lo):
            raise ValueError("grid needs step > 0 and hi >= lo")

    @classmethod
    def parse(cls, spec: str) -> DetuningGrid:
        """Parse ``"lo:hi:step"``."""
        try:
            lo, hi, step = (float(x) for x in spec.split(":"))
        except ValueError:
            raise ValueError(f"grid spec must look like lo:hi:step, got {spec!r}") from None
        return cls(lo, hi, step)

    @classmethod
    def covering(cls, lo: float, hi: float, step: float = 0.25) -> DetuningGrid:
        """Smallest symmetric grid with spacing ``step`` that contains [lo, hi]."""
        half = step * np.ceil(max(abs(lo), abs(hi)) / step - 1e-9)
        return cls(-float(half), float(half), step)

    def values(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.step)) + 1
        return np.round(self.lo + self.step * np.arange(n), 12)

    def spec(self) -> str:
        return f"{self.lo:g}:{self.hi:g}:{self.step:g}"


@dataclass(frozen=True, eq=False)
class LineshapeTable:
    params: PhysicalParams
    time: float
    detunings: np.ndarray
    signal: np.ndarray
    background: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        d = np.asarray(self.detunings, dtype=float)
        s = np.asarray(self.signal, dtype=float)
        if d.shape != s.shape or d.ndim != 1 or len(d) == 0:
            raise ValueError("detunings and signal must be equal-length 1-d arrays")
        if np.any(np.diff(d) <= 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any((s < 0) | (s > 1)) or not 0 <= self.background <= 1:
            raise ValueError("probabilities must lie in [0, 1]")
        object.__setattr__(self, "detunings", d)
        object.__setattr__(self, "signal", s)

    @property
    def peak(self) -> float:
        return float(self.signal.max())

    def edge_excess(self) -> float:
        """Largest deviation of the grid-edge signal from the background."""
        return float(max(abs(self.signal[0] - self.background), abs(self.signal[-1] - self.background)))

    def too_narrow(self, tol: float = FAR_DETUNED_TOL) -> bool:
        return self.edge_excess() >= tol * self.peak

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "time": self.time,
            "detunings": self.detunings.tolist(),
            "signal": self.signal.tolist(),
            "background": self.background,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> LineshapeTable:
        return cls(PhysicalParams(**d["params"]), float(d["time"]), np.array(d["detunings"], float),
                   np.array(d["signal"], float), float(d["background"]), dict(d.get("diagnostics", {})))

    def to_json(self) -> str:
        payload = self.to_dict()
        return json.dumps({"schema_version": SCHEMA_VERSION, "checksum": _checksum(payload),
                           "table": payload}, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> LineshapeTable:
        try:
            doc = json.loads(text)
            payload = doc["table"]
            ok = doc["schema_version"] == SCHEMA_VERSION and doc["checksum"] == _checksum(payload)
        except (ValueError, KeyError, TypeError) as exc:
            raise CorruptCacheEntry(f"unreadable table: {exc}") from exc
        if not ok:
            raise CorruptCacheEntry("checksum or schema version mismatch")
        return cls.from_dict(payload)


def _checksum(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# computation ---------------------------------------------------------------


def _probes(params: PhysicalParams, squeezings):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        return [dynamics.squeezed_state(r, params.fock_cutoff, params.squeezing_angle) for r in squeezings]


def _signals(params, deltas, times, probes, method):
    """Raw POVM signals, shape ``(len(probes), len(times), len(deltas))``."""
    rho0 = np.array([dynamics.initial_state(params, pr) for pr in probes])
    out = np.empty((len(probes), len(times), len(deltas)))
    for j, delta in enumerate(deltas):
        gen = dynamics.build_lindblad_generator(params, float(delta))
        states = dynamics.evolve_many(rho0, gen, times, method=method)  # (T, R, n, n)
        for i, pr in enumerate(probes):
            out[i, :, j] = dynamics.povm_signal_raw(states[:, i], pr)
    return out


def _background(params, times, probes, method):
    rho0 = np.array([dynamics.initial_state(params, pr) for pr in probes])
    gen = dynamics.build_lindblad_generator(params, coherent=False)
    states = dynamics.evolve_many(rho0, gen, times, method=method)
    return np.array([dynamics.povm_signal_raw(states[:, i], pr) for i, pr in enumerate(probes)])


def compute_lineshapes(params: PhysicalParams, times, grid: DetuningGrid | None = None,
                       squeezings=None, *, method: str = "expm",
                       use_symmetry: bool = True) -> dict:
    """Tables for every ``(r, t)`` combination from one propagation per detuning.

    Returns ``{(r, t): LineshapeTable}``.  ``squeezings`` are squeezing
    parameters ``r`` (default: ``params.squeezing``).  With
    ``use_symmetry`` the signal is evaluated once per ``|delta|``: the
    profile is even in delta because ``sigma_z H(delta) sigma_z = -H(-delta)``
    with a real Hamiltonian, real dissipators and real, sigma_z-invariant
    initial state and observable (checked in the test-suite).  Complex
    probe amplitudes (a squeezing angle off the real axis) disable it.
    """
    grid = grid or DetuningGrid()
    times = np.asarray(sorted(set(float(t) for t in np.atleast_1d(times))))
    if np.any(times <= 0):
        raise ValueError("interrogation times must be positive")
    squeezings = [params.squeezing] if squeezings is None else [float(r) for r in squeezings]
    deltas = grid.values()
    probes = _probes(params, squeezings)

    if use_symmetry and all(pr.is_real for pr in probes):
        key = np.round(np.abs(deltas), 12)
        unique, inverse = np.unique(key, return_inverse=True)
        raw = _signals(params, unique, times, probes, method)[:, :, inverse]
    else:
        raw = _signals(params, deltas, times, probes, method)
    raw_bg = _background(params, times, probes, method)

    tables = {}
    for i, (r, probe) in enumerate(zip(squeezings, probes)):
        p = params.replace(squeezing=r)
        for k, t in enumerate(times):
            diag = {
                "grid": grid.spec(),
                "method": method,
                "raw_min": float(raw[i, k].min()),
                "raw_max": float(raw[i, k].max()),
                "raw_background": float(raw_bg[i, k]),
                "squeezing_norm_deficit": probe.norm_deficit,
            }
            tables[(r, float(t))] = LineshapeTable(
                p, float(t), deltas, np.clip(raw[i, k], 0.0, 1.0),
                float(np.clip(raw_bg[i, k], 0.0, 1.0)), diag)
    return tables


def compute_lineshape(params: PhysicalParams, t: float, grid: DetuningGrid | None = None,
                      **kw) -> LineshapeTable:
    """Excitation profile at interrogation time ``t`` (units of T) for ``params.squeezing``."""
    return compute_lineshapes(params, [t], grid, **kw)[(params.squeezing, float(t))]


def background_probability(params: PhysicalParams, times, method: str = "expm") -> np.ndarray:
    """P_bg(t): POVM signal of the H = 0 evolution."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    order = np.argsort(times)
    raw = _background(params, times[order], _probes(params, [params.squeezing]), method)[0]
    out = np.empty_like(raw)
    out[order] = raw
    return np.clip(out, 0.0, 1.0)


# queries ---------------------------------------------------------------------


def signal_at(table: LineshapeTable, delta):
    """Piecewise-linear interpolation of P0; exact at grid nodes."""
    d = np.asarray(delta, dtype=float)
    lo, hi = table.detunings[0], table.detunings[-1]
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if np.any(d < lo - slack) or np.any(d > hi + slack):
        raise OutOfRange(f"detuning {delta} outside table range [{lo}, {hi}]")
    out = np.interp(np.clip(d, lo, hi), table.detunings, table.signal)
    return float(out) if out.ndim == 0 else out


def fwhm(table: LineshapeTable, threshold: float = NO_PEAK_THRESHOLD) -> float:
    """Full width at half maximum of the background-subtracted profile.

    Walks outwards from the maximum to the first half-maximum crossing on
    each side and interpolates linearly between grid points.
    """
    y = table.signal - table.background
    i = int(np.argmax(y))
    peak = y[i]
    if peak < threshold:
        raise NoPeak(f"peak {peak:.3g} above background is below {threshold:g}")
    half = peak / 2.0
    x = table.detunings

    def crossing(indices):
        prev = i
        for j in indices:
            if y[j] <= half:
                return x[j] + (half - y[j]) * (x[prev] - x[j]) / (y[prev] - y[j])
            prev = j
        raise NoPeak("profile does not fall to half maximum within the grid")

    return float(crossing(range(i + 1, len(y))) - crossing(range(i - 1, -1, -1)))


# cache -----------------------------------------------------------------------


@dataclass(frozen=True)
class LineshapeKey:
    params: PhysicalParams
    time: float
    grid: DetuningGrid
    method: str = "expm"

    def digest(self) -> str:
        blob = json.dumps({"schema_version": SCHEMA_VERSION, "params": self.params.to_dict(),
                           "time": float(self.time), "grid": self.grid.spec(), "method": self.method},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def default_cache_root() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "qlsearch"


class LineshapeCache:
    """One JSON file per key under ``root``; writes are atomic and locked per key."""

    def __init__(self, root: str | os.PathLike | None = None):
        self.root = Path(root) if root is not None else default_cache_root()
        self.hits = 0
        self.misses = 0

    def path(self, key: LineshapeKey) -> Path:
        return self.root / f"{key.digest()}.json"

    def get(self, key: LineshapeKey) -> LineshapeTable | None:
        """Cached table, None on a miss; raises CorruptCacheEntry for damaged files."""
        path = self.path(key)
        if not path.exists():
            return None
        return LineshapeTable.from_json(path.read_text())

    def put(self, key: LineshapeKey, table: LineshapeTable) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.path(key)
        with FileLock(str(path) + ".lock"):
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            with os.fdopen(fd, "w") as fh:
                fh.write(table.to_json())
            os.replace(tmp, path)

    def _lookup(self, key):
        try:
            table = self.get(key)
        except CorruptCacheEntry as exc:
            log.warning("corrupt cache entry %s (%s); recomputing", self.path(key).name, exc)
            return None
        if table is not None:
            self.hits += 1
        return table

    def get_or_compute(self, key: LineshapeKey) -> LineshapeTable:
        table = self._lookup(key)
        if table is None:
            self.misses += 1
            table = compute_lineshape(key.params, key.time, key.grid, method=key.method)
            self.put(key, table)
            # round-trip through JSON so hits and fresh results are bit-identical
            table = LineshapeTable.from_json(table.to_json())
        return table

    def tables(self, params: PhysicalParams, times, grid: DetuningGrid, squeezings=None,
               method: str = "expm") -> dict:
        """``{(r, t): table}`` for all combinations, computing the missing ones together."""
        squeezings = [params.squeezing] if squeezings is None else [float(r) for r in squeezings]
        times = [float(t) for t in times]
        out, missing = {}, []
        for r in squeezings:
            for t in times:
                key = LineshapeKey(params.replace(squeezing=r), t, grid, method)
                table = self._lookup(key)
                if table is None:
                    missing.append((r, t))
                else:
                    out[(r, t)] = table
        if missing:
            self.misses += len(missing)
            rs = sorted({r for r, _ in missing})
            ts = sorted({t for _, t in missing})
            fresh = compute_lineshapes(params, ts, grid, rs, method=method)
            for (r, t), table in fresh.items():
                if (r, t) in missing:
                    self.put(LineshapeKey(params.replace(squeezing=r), t, grid, method), table)
                    out[(r, t)] = LineshapeTable.from_json(table.to_json())
        return out
