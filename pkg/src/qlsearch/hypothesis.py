"""Neyman-Pearson test over L adjacent frequency bins of M shots each.

Hypotheses: ``H1`` (transition present, bin ``k`` succeeds with
``P0(t, delta_k)``) and ``H2`` (background only, ``P_bg(t)`` everywhere).
The statistic is ``lambda(g) = ln Pr(g|H2) / Pr(g|H1)``; small values
favour the transition.  The decision rule is ``lambda < phi -> H1`` and
``lambda >= phi -> H2``.

Exact error rates come from the full distribution of ``lambda``, built by
convolving the L independent per-bin contributions.  All distributions
share the support of the nominal statistic, so the position worst case and
SPAM-mismatched data only change the weights.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import binom

from .errors import AtomOverflow

PROB_FLOOR = 1e-12
MERGE_RTOL = 1e-12
MAX_ATOMS = 10 ** 7
DEFAULT_MC_SAMPLES = 200_000


class Position(str, enum.Enum):
    ALIGNED = "aligned"
    HALF_STEP_SHIFTED = "shifted"


class Hypothesis(str, enum.Enum):
    H1 = "H1"  # transition present
    H2 = "H2"  # background only


def floor_probability(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def flip_probability(p, spam: float):
    """Success probability after an independent bit flip with probability ``spam``."""
    p = np.asarray(p, dtype=float)
    return p * (1.0 - spam) + (1.0 - p) * spam


@dataclass(frozen=True)
class TestConfig:
    bins: int
    shots: int
    time: float
    step: float
    threshold: float = 0.0
    spam: float = 0.0
    position: Position = Position.ALIGNED

    __test__ = False  # keep pytest from collecting this

    def __post_init__(self):
        if self.bins < 1 or self.shots < 1:
            raise ValueError("bins and shots must be >= 1")
        if not 0.0 <= self.spam < 0.5:
            raise ValueError("spam must lie in [0, 0.5)")
        if not self.step > 0:
            raise ValueError("step must be positive")
        object.__setattr__(self, "position", Position(self.position))

    def detunings(self, position: Position | None = None) -> np.ndarray:
        return bin_detunings(self.bins, self.step, position or self.position)


def bin_detunings(bins: int, step: float, position: Position = Position.ALIGNED) -> np.ndarray:
    """Bin centres relative to the line centre.

    The aligned grid is centred on the line, ``(k - (L-1)/2) * step``; the
    shifted grid is the same grid moved by ``+step/2``.
    """
    k = np.arange(bins, dtype=float)
    d = (k - (bins - 1) / 2.0) * step
    if Position(position) is Position.HALF_STEP_SHIFTED:
        d = d + step / 2.0
    return d


@dataclass(frozen=True, eq=False)
class BinModel:
    """Per-bin success probabilities of the nominal model, floored away from 0 and 1."""

    p_signal: np.ndarray
    p_background: float

    def __post_init__(self):
        object.__setattr__(self, "p_signal", floor_probability(np.atleast_1d(np.asarray(self.p_signal, float))))
        object.__setattr__(self, "p_background", float(floor_probability(self.p_background)))

    @property
    def bins(self) -> int:
        return len(self.p_signal)

    def data_probabilities(self, hypothesis: Hypothesis) -> np.ndarray:
        if Hypothesis(hypothesis) is Hypothesis.H1:
            return self.p_signal
        return np.full(self.bins, self.p_background)


def bin_terms(model: BinModel, shots: int) -> np.ndarray:
    """``(L, M+1)`` array of per-bin statistic contributions for ``g_k = 0..M``."""
    g = np.arange(shots + 1, dtype=float)
    pb, ps = model.p_background, model.p_signal
    slope = np.log(pb / ps)[:, None]
    offset = np.log((1.0 - pb) / (1.0 - ps))[:, None]
    return g[None, :] * slope + (shots - g)[None, :] * offset


def np_statistic(g, model: BinModel, shots: int) -> float:
    """Log-likelihood ratio ``ln Pr(g|H2) / Pr(g|H1)`` (binomial factors cancel)."""
    g = np.asarray(g)
    if g.shape != (model.bins,) or np.any(g < 0) or np.any(g > shots):
        raise ValueError("g must hold L counts between 0 and M")
    pb, ps = model.p_background, model.p_signal
    return float(np.sum(g * np.log(pb / ps) + (shots - g) * np.log((1.0 - pb) / (1.0 - ps))))


@dataclass(frozen=True, eq=False)
class StatisticDistribution:
    """Discrete distribution of the statistic: sorted atom values and their probabilities."""

    values: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.values)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.values.tolist(), self.probs.tolist()))

    def total(self) -> float:
        return float(math.fsum(self.probs))

    def mass_below(self, phi: float) -> float:
        return float(math.fsum(self.probs[self.values < phi]))

    def mass_at_or_above(self, phi: float) -> float:
        return float(math.fsum(self.probs[self.values >= phi]))

    def mass_above(self, phi: float) -> float:
        return float(math.fsum(self.probs[self.values > phi]))

    def summary(self) -> dict:
        mean = float(np.dot(self.values, self.probs))
        return {"atoms": len(self), "min": float(self.values[0]), "max": float(self.values[-1]),
                "mean": mean, "total_probability": self.total()}


def _merge(values: np.ndarray, weights: np.ndarray, rtol: float = MERGE_RTOL):
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[:, order]
    if len(v) > 1:
        gaps = np.diff(v) > rtol * np.maximum(1.0, np.abs(v[1:]))
        starts = np.concatenate([[0], np.nonzero(gaps)[0] + 1])
        if len(starts) < len(v):
            v = v[starts]
            w = np.add.reduceat(w, starts, axis=1)
    return v, w


def joint_distribution(terms: np.ndarray, weights: np.ndarray, max_atoms: int = MAX_ATOMS):
    """Convolve per-bin atoms for several weightings over a shared support.

    ``terms`` is ``(L, M+1)``; ``weights`` is ``(H, L, M+1)``.  Returns sorted
    atom values ``(n,)`` and weights ``(H, n)``.
    """
    weights = np.asarray(weights, dtype=float)
    values, w = _merge(terms[0], weights[:, 0, :])
    for k in range(1, terms.shape[0]):
        if len(values) * terms.shape[1] > max_atoms:
            raise AtomOverflow(f"more than {max_atoms} atoms at bin {k + 1}")
        values = (values[:, None] + terms[k][None, :]).ravel()
        w = (w[:, :, None] * weights[:, k][:, None, :]).reshape(len(weights), -1)
        values, w = _merge(values, w)
    return values, w


def binomial_weights(p, shots: int) -> np.ndarray:
    """``(L, M+1)`` binomial pmf table for per-bin probabilities ``p``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    return binom.pmf(np.arange(shots + 1)[None, :], shots, p[:, None])


def statistic_distribution(model: BinModel, shots: int, hypothesis: Hypothesis | str,
                           effective_p=None, max_atoms: int = MAX_ATOMS) -> StatisticDistribution:
    """Exact distribution of the statistic under ``hypothesis``.

    ``effective_p`` replaces the data-generating per-bin probabilities while
    the statistic keeps using the nominal ``model``.
    """
    p = model.data_probabilities(hypothesis) if effective_p is None else np.broadcast_to(
        np.asarray(effective_p, dtype=float), (model.bins,))
    values, w = joint_distribution(bin_terms(model, shots), binomial_weights(p, shots)[None], max_atoms)
    return StatisticDistribution(values, w[0])


@dataclass(frozen=True)
class ErrorPair:
    miss_rate: float
    false_alarm: float

    def feasible(self, eps1: float, eps2: float) -> bool:
        return self.miss_rate <= eps1 and self.false_alarm <= eps2


def error_probabilities(dist_h1: StatisticDistribution, dist_h2: StatisticDistribution, phi: float,
                        convention: str = "region") -> ErrorPair:
    """Miss rate and false alarm at threshold ``phi``.

    ``convention="region"`` follows the decision regions (``lambda >= phi``
    decides for background, so ties count as misses).  ``"strict"`` sums
    only ``lambda > phi`` for the miss rate.
    """
    if convention == "region":
        mr = dist_h1.mass_at_or_above(phi)
    elif convention == "strict":
        mr = dist_h1.mass_above(phi)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    return ErrorPair(mr, dist_h2.mass_below(phi))


def _tail(w: np.ndarray) -> np.ndarray:
    """``t[i] = sum(w[..., i:])`` for i = 0..n, summed from the small end."""
    rev = np.cumsum(w[..., ::-1], axis=-1)[..., ::-1]
    return np.concatenate([rev, np.zeros(w.shape[:-1] + (1,))], axis=-1)


def _head(w: np.ndarray) -> np.ndarray:
    """``h[i] = sum(w[..., :i])`` for i = 0..n."""
    return np.concatenate([np.zeros(w.shape[:-1] + (1,)), np.cumsum(w, axis=-1)], axis=-1)


def threshold_curve(values: np.ndarray, w_h1: np.ndarray, w_h2: np.ndarray):
    """Error rates for every distinct threshold on a shared sorted support.

    ``w_h1`` may be ``(n,)`` or ``(P, n)`` (worst case over rows).  Returns
    ``(phis, miss, false_alarm)`` with ``len(values) + 1`` entries: ``-inf``,
    the midpoints between adjacent atoms, and ``+inf``.
    """
    phis = np.concatenate([[-np.inf], 0.5 * (values[1:] + values[:-1]), [np.inf]])
    miss = _tail(np.atleast_2d(w_h1)).max(axis=0)
    fa = _head(w_h2)
    return phis, np.clip(miss, 0.0, 1.0), np.clip(fa, 0.0, 1.0)


def best_threshold(values, w_h1, w_h2, eps1: float, eps2: float):
    """Feasible threshold minimising ``max(MR/eps1, FA/eps2)``.

    Returns ``(phi, ErrorPair)``; ``phi`` is None when nothing is feasible,
    in which case the pair is that of the least-infeasible threshold.
    """
    phis, miss, fa = threshold_curve(values, w_h1, w_h2)
    score = np.maximum(miss / eps1, fa / eps2)
    i = int(np.argmin(score))
    pair = ErrorPair(float(miss[i]), float(fa[i]))
    if miss[i] <= eps1 and fa[i] <= eps2:
        return float(phis[i]), pair
    return None, pair


def _on_union(dists: Sequence[StatisticDistribution], support: np.ndarray) -> np.ndarray:
    out = np.zeros((len(dists), len(support)))
    for j, d in enumerate(dists):
        np.add.at(out[j], np.searchsorted(support, d.values), d.probs)
    return out


def find_threshold(dist_h1: StatisticDistribution | Sequence[StatisticDistribution],
                   dist_h2: StatisticDistribution, eps1: float, eps2: float) -> float | None:
    """Threshold with MR <= eps1 and FA <= eps2, or None.

    Passing several H1 distributions takes the miss rate as their maximum
    (worst-case lineshape position).
    """
    if not (0 < eps1 < 1 and 0 < eps2 < 1):
        raise ValueError("eps1 and eps2 must lie in (0, 1)")
    h1 = [dist_h1] if isinstance(dist_h1, StatisticDistribution) else list(dist_h1)
    support = np.unique(np.concatenate([d.values for d in h1] + [dist_h2.values]))
    w = _on_union(h1 + [dist_h2], support)
    phi, _ = best_threshold(support, w[:-1], w[-1], eps1, eps2)
    return phi


def spam_exact(model: BinModel, shots: int, spam: float, data_signal=None):
    """Exact distributions when every shot is flipped with probability ``spam``.

    The statistic stays the nominal (noise-unaware) one.  ``data_signal``
    overrides the H1 data probabilities before the flip channel (used for
    the shifted lineshape position).
    """
    if not 0.0 <= spam < 0.5:
        raise ValueError("spam must lie in [0, 0.5)")
    p1 = model.p_signal if data_signal is None else np.asarray(data_signal, dtype=float)
    p2 = model.data_probabilities(Hypothesis.H2)
    return (statistic_distribution(model, shots, Hypothesis.H1, flip_probability(p1, spam)),
            statistic_distribution(model, shots, Hypothesis.H2, flip_probability(p2, spam)))


@dataclass(frozen=True)
class MonteCarloErrors:
    miss_rate: float
    false_alarm: float
    miss_rate_se: float
    false_alarm_se: float
    samples: int

    @property
    def errors(self) -> ErrorPair:
        return ErrorPair(self.miss_rate, self.false_alarm)

    def feasible(self, eps1: float, eps2: float, k: float = 2.0) -> bool:
        return (self.miss_rate + k * self.miss_rate_se <= eps1
                and self.false_alarm + k * self.false_alarm_se <= eps2)


def sample_counts(p, shots: int, spam: float, n_samples: int, rng: np.random.Generator,
                  chunk: int = 20_000) -> np.ndarray:
    """Simulate ``n_samples`` data arrays shot by shot, flipping each outcome with probability ``spam``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.empty((n_samples, len(p)), dtype=np.int64)
    for start in range(0, n_samples, chunk):
        n = min(chunk, n_samples - start)
        clicks = rng.random((n, len(p), shots)) < p[None, :, None]
        if spam > 0:
            clicks ^= rng.random((n, len(p), shots)) < spam
        out[start:start + n] = clicks.sum(axis=2)
    return out


def mc_streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent counter-based (Philox) streams derived from one seed."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def sampled_statistics(model: BinModel, shots: int, spam: float, n_samples: int, seed: int,
                       data_signal=None):
    """Monte Carlo statistic samples under H1 and H2 (nominal statistic, noisy data)."""
    terms = bin_terms(model, shots)
    rng1, rng2 = mc_streams(seed, 2)
    p1 = model.p_signal if data_signal is None else np.asarray(data_signal, dtype=float)
    rows = np.arange(model.bins)
    lam1 = terms[rows, sample_counts(p1, shots, spam, n_samples, rng1)].sum(axis=1)
    lam2 = terms[rows, sample_counts(model.data_probabilities(Hypothesis.H2), shots, spam,
                                     n_samples, rng2)].sum(axis=1)
    return lam1, lam2


def spam_monte_carlo(model: BinModel, shots: int, spam: float, phi: float, n_samples: int,
                     seed: int, data_signal=None) -> MonteCarloErrors:
    """Monte Carlo estimate of MR/FA under per-shot bit flips, with binomial standard errors."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lam1, lam2 = sampled_statistics(model, shots, spam, n_samples, seed, data_signal)
    mr = float(np.mean(lam1 >= phi))
    fa = float(np.mean(lam2 < phi))
    return MonteCarloErrors(mr, fa, math.sqrt(mr * (1 - mr) / n_samples),
                            math.sqrt(fa * (1 - fa) / n_samples), n_samples)


def empirical_distribution(samples: np.ndarray) -> StatisticDistribution:
    values, counts = np.unique(samples, return_counts=True)
    return StatisticDistribution(values.astype(float), counts / counts.sum())


@dataclass(frozen=True)
class WorstCase:
    """Errors at one threshold for both lineshape positions."""

    errors: ErrorPair
    per_position: dict = field(default_factory=dict)


def position_models(table, bins: int, step: float):
    """Nominal model (aligned lineshape) and the shifted-position H1 data probabilities.

    The statistic always uses the aligned lineshape; the half-step shifted
    position only changes the data under H1.  Hence the false-alarm rate is
    position independent.
    """
    from .lineshape import signal_at

    aligned = bin_detunings(bins, step, Position.ALIGNED)
    shifted = bin_detunings(bins, step, Position.HALF_STEP_SHIFTED)
    model = BinModel(signal_at(table, aligned), table.background)
    return model, floor_probability(signal_at(table, shifted))


def worst_case_miss(config: TestConfig, table) -> WorstCase:
    """MR = max over the two lineshape positions at ``config.threshold``; FA computed once."""
    model, p_shift = position_models(table, config.bins, config.step)
    p1 = np.vstack([model.p_signal, p_shift])
    weights = binomial_weights(flip_probability(np.vstack([p1, np.full((1, model.bins), model.p_background)]),
                                                config.spam).ravel(), config.shots)
    weights = weights.reshape(3, model.bins, config.shots + 1)
    values, w = joint_distribution(bin_terms(model, config.shots), weights)
    phi = config.threshold
    mr = [float(math.fsum(w[i, values >= phi])) for i in range(2)]
    fa = float(math.fsum(w[2, values < phi]))
    return WorstCase(ErrorPair(max(mr), fa),
                     {Position.ALIGNED.value: ErrorPair(mr[0], fa),
                      Position.HALF_STEP_SHIFTED.value: ErrorPair(mr[1], fa)})
