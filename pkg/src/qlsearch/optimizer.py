"""Scan-speed optimisation over (M, t, step) under miss/false-alarm bounds."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import hypothesis as hyp
from .hypothesis import ErrorPair
from .lineshape import DetuningGrid, LineshapeCache, LineshapeTable, fwhm
from .errors import NoPeak
from .params import PhysicalParams, db_to_r

log = logging.getLogger(__name__)


def _frange(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1
    return tuple(float(x) for x in np.round(lo + step * np.arange(n), 9))


DEFAULT_SHOTS = tuple(range(1, 33))
DEFAULT_TIMES = _frange(5, 100, 5)
DEFAULT_STEPS = _frange(0.5, 15, 0.5)


@dataclass(frozen=True)
class SearchSpace:
    """Grid searched by :func:`optimize`; times in T, steps in Omega."""

    shots: tuple = DEFAULT_SHOTS
    times: tuple = DEFAULT_TIMES
    steps: tuple = DEFAULT_STEPS
    bins: int = 1
    eps1: float = 0.01
    eps2: float = 0.01
    spam: float = 0.0
    squeezing_db: tuple = (0.0,)
    refine: bool = True
    time_offset: float = 0.0
    mode: str = "exact"
    mc_samples: int = hyp.DEFAULT_MC_SAMPLES
    seed: int = 0

    def __post_init__(self):
        for name in ("shots", "times", "steps", "squeezing_db"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            object.__setattr__(self, name, vals)
        if any(int(m) != m or m < 1 for m in self.shots):
            raise ValueError("shots must be positive integers")
        if any(t <= 0 for t in self.times) or any(s <= 0 for s in self.steps):
            raise ValueError("times and steps must be positive")
        if not (0 < self.eps1 <= 1 and 0 < self.eps2 <= 1):
            raise ValueError("eps1 and eps2 must lie in (0, 1]")
        if self.bins < 1:
            raise ValueError("bins must be >= 1")
        if not 0 <= self.spam < 0.5:
            raise ValueError("spam must lie in [0, 0.5)")
        if self.mode not in ("exact", "mc"):
            raise ValueError("mode must be 'exact' or 'mc'")

    def detuning_grid(self, step: float = 0.25) -> DetuningGrid:
        """Lineshape grid wide enough for both bin layouts at the largest step."""
        reach = self.bins * max(self.steps) / 2.0
        if self.refine:
            reach += self.bins * _spacing(self.steps) / 4.0
        return DetuningGrid.covering(-reach, reach, step)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


COARSE_SPACE = dict(times=_frange(10, 100, 10), steps=_frange(0.5, 8, 0.5))


@dataclass(frozen=True)
class ScanPoint:
    shots: int
    time: float
    step: float
    threshold: float | None
    errors: ErrorPair
    speed: float
    feasible: bool

    def row(self, params: PhysicalParams) -> dict:
        """Flat record with interface units (Hz, seconds, Hz/s)."""
        return {
            "M": self.shots,
            "t_T": self.time,
            "step_Omega": self.step,
            "t_s": params.time_to_seconds(self.time),
            "step_Hz": params.detuning_to_hz(self.step),
            "phi": self.threshold,
            "miss_rate": self.errors.miss_rate,
            "false_alarm": self.errors.false_alarm,
            "v_internal": self.speed,
            "v_Hz_per_s": params.speed_to_hz_per_s(self.speed),
            "feasible": self.feasible,
        }


def scan_speed(step: float, shots: int, time: float, time_offset: float = 0.0) -> float:
    """Bandwidth covered per unit time, ``step / (M (t + offset))``."""
    return step / (shots * (time + time_offset))


def _point_weights(model, p_shift, shots, spam):
    probs = np.vstack([model.p_signal, p_shift, np.full(model.bins, model.p_background)])
    w = hyp.binomial_weights(hyp.flip_probability(probs, spam).ravel(), shots)
    return w.reshape(3, model.bins, shots + 1)


def _point_seed(seed, shots, time, step, bins):
    return [int(seed), int(shots), int(round(time * 1000)), int(round(step * 1000)), int(bins)]


def evaluate_point(shots: int, time: float, step: float, bins: int, spam: float, eps1: float,
                   eps2: float, table: LineshapeTable, *, time_offset: float = 0.0,
                   mode: str = "exact", mc_samples: int = hyp.DEFAULT_MC_SAMPLES,
                   seed: int = 0) -> ScanPoint:
    """Feasibility and speed of one ``(M, t, step)`` candidate.

    The threshold is chosen per point; the miss rate is the worse of the
    two lineshape positions.  ``mode="mc"`` replaces the exact error rates
    by Monte Carlo estimates and only accepts a point when every estimate
    plus two standard errors is within its bound.
    """
    v = scan_speed(step, shots, time, time_offset)
    model, p_shift = hyp.position_models(table, bins, step)
    if mode == "exact":
        values, w = hyp.joint_distribution(hyp.bin_terms(model, shots),
                                           _point_weights(model, p_shift, shots, spam))
        phi, errors = hyp.best_threshold(values, w[:2], w[2], eps1, eps2)
    else:
        phi, errors = _mc_threshold(model, p_shift, shots, spam, eps1, eps2, mc_samples,
                                    _point_seed(seed, shots, time, step, bins))
    return ScanPoint(int(shots), float(time), float(step), phi, errors, v, phi is not None)


def _mc_threshold(model, p_shift, shots, spam, eps1, eps2, n, seed):
    lam_al, lam2 = hyp.sampled_statistics(model, shots, spam, n, seed)
    lam_sh, _ = hyp.sampled_statistics(model, shots, spam, n, seed + [1], data_signal=p_shift)
    support = np.unique(np.concatenate([lam_al, lam_sh, lam2]))
    counts = np.array([np.bincount(np.searchsorted(support, s), minlength=len(support))
                       for s in (lam_al, lam_sh, lam2)]) / n
    phis, miss, fa = hyp.threshold_curve(support, counts[:2], counts[2])
    miss_up = miss + 2 * np.sqrt(miss * (1 - miss) / n)
    fa_up = fa + 2 * np.sqrt(fa * (1 - fa) / n)
    score = np.maximum(miss_up / eps1, fa_up / eps2)
    i = int(np.argmin(score))
    errors = ErrorPair(float(miss[i]), float(fa[i]))
    return (float(phis[i]) if score[i] <= 1 else None), errors


def _spacing(values):
    vals = sorted(set(values))
    return min(np.diff(vals)) if len(vals) > 1 else vals[0]


def _order(c):
    v, m, t, s = c
    return (-v, m, t, -s)


@dataclass
class SweepResult:
    space: SearchSpace
    optima: dict  # squeezing dB -> ScanPoint | None
    maps: dict = field(default_factory=dict)  # squeezing dB -> list[ScanPoint]
    evaluations: int = 0

    def rows(self, params: PhysicalParams) -> list[dict]:
        out = []
        for db, pt in self.optima.items():
            base = {"L": self.space.bins, "spam": self.space.spam, "squeezing_db": db}
            if pt is None:
                out.append({**base, "feasible": False})
            else:
                out.append({**base, **pt.row(params)})
        return out


class Optimizer:
    """Holds parameters and the lineshape cache shared by the searches."""

    def __init__(self, params: PhysicalParams | None = None, cache: LineshapeCache | None = None,
                 grid_step: float = 0.25, method: str = "expm"):
        self.params = params or PhysicalParams()
        self.cache = cache if cache is not None else LineshapeCache()
        self.grid_step = grid_step
        self.method = method
        self.evaluations = 0

    def tables(self, space: SearchSpace, times, db: float, grid: DetuningGrid | None = None):
        grid = grid or space.detuning_grid(self.grid_step)
        r = db_to_r(db)
        tabs = self.cache.tables(self.params, times, grid, [r], method=self.method)
        return {t: tabs[(r, float(t))] for t in times}

    def evaluate(self, space: SearchSpace, table, shots, time, step) -> ScanPoint:
        self.evaluations += 1
        return evaluate_point(shots, time, step, space.bins, space.spam, space.eps1, space.eps2,
                              table, time_offset=space.time_offset, mode=space.mode,
                              mc_samples=space.mc_samples, seed=space.seed)

    def _first_feasible(self, space, tables, candidates):
        for v, m, t, s in sorted(candidates, key=_order):
            pt = self.evaluate(space, tables[t], m, t, s)
            if pt.feasible:
                return pt
        return None

    def best(self, space: SearchSpace, db: float, grid: DetuningGrid | None = None) -> ScanPoint | None:
        """Maximum-speed feasible point for one squeezing value.

        Candidates are visited in order of decreasing speed (ties: smaller M,
        smaller t, larger step), so the first feasible one is the optimum
        and slower candidates are never evaluated.
        """
        tables = self.tables(space, space.times, db, grid)
        cands = [(scan_speed(s, m, t, space.time_offset), m, t, s)
                 for m in space.shots for t in space.times for s in space.steps]
        best = self._first_feasible(space, tables, cands)
        if best is None or not space.refine:
            return best
        return self._refine(space, db, best, grid)

    def _refine(self, space, db, best, grid):
        dt, ds = _spacing(space.times) / 2.0, _spacing(space.steps) / 2.0
        ts = sorted({t for t in (best.time - dt, best.time, best.time + dt) if t > 0})
        ss = sorted({s for s in (best.step - ds, best.step, best.step + ds) if s > 0})
        old = {(m, t, s) for m in space.shots for t in space.times for s in space.steps}
        incumbent = _order((best.speed, best.shots, best.time, best.step))
        cands = []
        for m in space.shots:
            for t in ts:
                for s in ss:
                    c = (scan_speed(s, m, t, space.time_offset), m, t, s)
                    if (m, t, s) not in old and _order(c) < incumbent:
                        cands.append(c)
        if not cands:
            return best
        tables = self.tables(space, sorted({c[2] for c in cands}), db, grid)
        return self._first_feasible(space, tables, cands) or best

    def optimize(self, space: SearchSpace, with_maps: bool = False) -> SweepResult:
        """Best point per squeezing value; optionally the full feasibility maps."""
        start = self.evaluations
        optima, maps = {}, {}
        for db in space.squeezing_db:
            optima[db] = self.best(space, db)
            if optima[db] is None:
                log.info("no feasible point at %.3g dB", db)
            if with_maps:
                maps[db] = [pt for m in space.shots for pt in self.speed_map(space, m, db)]
        return SweepResult(space, optima, maps, self.evaluations - start)

    def speed_map(self, space: SearchSpace, shots: int, db: float) -> list[ScanPoint]:
        """Every ``(t, step)`` cell at fixed M, ordered by t then step."""
        tables = self.tables(space, space.times, db)
        return [self.evaluate(space, tables[t], shots, t, s) for t in space.times for s in space.steps]

    def fwhm_curve(self, space: SearchSpace, db: float) -> dict:
        """FWHM (units of Omega) of the lineshape at each searched time."""
        out = {}
        for t, table in self.tables(space, space.times, db).items():
            try:
                out[t] = fwhm(table)
            except NoPeak:
                out[t] = math.nan
        return out


def optimize(space: SearchSpace, params: PhysicalParams | None = None,
             cache: LineshapeCache | None = None) -> SweepResult:
    return Optimizer(params, cache).optimize(space)


def speed_map(space: SearchSpace, shots: int, db: float, params: PhysicalParams | None = None,
              cache: LineshapeCache | None = None) -> list[ScanPoint]:
    return Optimizer(params, cache).speed_map(space, shots, db)


def sweep_squeezing(curves, squeezing_db, params: PhysicalParams | None = None,
                    cache: LineshapeCache | None = None, **space_kw) -> dict:
    """Optimal speed versus squeezing for several ``(L, spam)`` curves.

    All curves share one lineshape grid (sized for the largest L) so the
    dynamics is computed once per squeezing value.
    """
    opt = Optimizer(params, cache)
    spaces = {(L, xi): SearchSpace(bins=L, spam=xi, squeezing_db=tuple(squeezing_db), **space_kw)
              for L, xi in curves}
    widest = max(spaces.values(), key=lambda s: s.bins)
    grid = widest.detuning_grid(opt.grid_step)
    out = {}
    for key, space in spaces.items():
        out[key] = SweepResult(space, {db: opt.best(space, db, grid) for db in space.squeezing_db})
    return out


__all__ = ["SearchSpace", "ScanPoint", "SweepResult", "Optimizer", "evaluate_point", "optimize",
           "speed_map", "sweep_squeezing", "scan_speed", "COARSE_SPACE"]
