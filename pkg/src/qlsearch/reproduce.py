"""Data behind the four figures, written as CSV/JSON with a manifest.

Every run writes ``manifest.json`` (config, digest, library versions and the
sha256 of each data file) plus ``runtimes.json``.  Only the latter depends
on wall-clock time, so two runs with the same config leave byte-identical
data files and manifests.
"""
from __future__ import annotations

import json
import logging
import platform
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import hypothesis as hyp
from .config import RunConfig
from .errors import NoPeak, QLSearchError, VerificationError
from .lineshape import DetuningGrid, LineshapeCache, fwhm
from .optimizer import COARSE_SPACE, Optimizer, SearchSpace, _frange, sweep_squeezing
from .report import embedded_digest, file_sha256, write_csv, write_json

log = logging.getLogger(__name__)

FIGURES = ("fig2", "fig3", "fig4", "fig5")

FIG2_PROFILE_TIMES = (10.0, 20.0, 35.0, 50.0)
FIG2_TIMES = _frange(5, 100, 5)
FIG2_COARSE_TIMES = (10.0, 20.0, 30.0, 35.0, 40.0, 50.0)
FIG2_GRID = DetuningGrid(-12.0, 12.0, 0.25)

FIG3 = dict(bins=5, shots=8, time=35.0, step=5.0)
FIG3_SPAM = (0.0, 0.1)
FIG3_MC_POINTS = 41

FIG4_BINS = (1, 3)
FIG4_SHOTS = (10, 20)

FIG5_CURVES = ((1, 0.0), (1, 0.1), (3, 0.0), (3, 0.1))
FIG5_DB = _frange(0, 10, 1)
FIG5_COARSE_DB = _frange(0, 10, 2)


class _Timer:
    def __init__(self):
        self.runtimes = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        yield
        self.runtimes[name] = round(time.perf_counter() - t0, 3)
        log.info("%s done in %.1f s", name, self.runtimes[name])


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "qlsearch": __version__}


def figure_digest(cfg: RunConfig, figure: str, coarse: bool) -> str:
    return cfg.digest(figure, bool(coarse))


# fig2 -------------------------------------------------------------------------


def fig2(cfg: RunConfig, out: Path, cache: LineshapeCache, coarse: bool, digest: str, timer) -> list:
    params = cfg.physics.params()
    times = sorted(set(FIG2_COARSE_TIMES if coarse else FIG2_TIMES) | set(FIG2_PROFILE_TIMES))
    with timer.stage("fig2.lineshapes"):
        tables = cache.tables(params, times, FIG2_GRID, method=cfg.lineshape.method)
    tables = {t: tables[(params.squeezing, t)] for t in times}

    profile_rows = []
    for t in FIG2_PROFILE_TIMES:
        tab = tables[t]
        for d, p in zip(tab.detunings, tab.signal):
            profile_rows.append({"t_T": t, "delta_Omega": float(d),
                                 "delta_Hz": params.detuning_to_hz(float(d)),
                                 "P0": float(p), "P_bg": tab.background})
    summary_rows = []
    for t in times:
        tab = tables[t]
        try:
            width = fwhm(tab)
        except NoPeak:
            width = float("nan")
        summary_rows.append({"t_T": t, "t_s": params.time_to_seconds(t), "fwhm_Omega": width,
                             "fwhm_Hz": params.detuning_to_hz(width), "peak": tab.peak,
                             "P_bg": tab.background})
    return [write_csv(out / "fig2_profiles.csv", profile_rows, digest),
            write_csv(out / "fig2_summary.csv", summary_rows, digest)]


# fig3 -------------------------------------------------------------------------


def fig3_curves(table, spam: float, bins=FIG3["bins"], shots=FIG3["shots"], step=FIG3["step"]):
    """Exact MR/FA versus threshold; MR per position and their maximum."""
    model, p_shift = hyp.position_models(table, bins, step)
    probs = np.vstack([model.p_signal, p_shift, np.full(bins, model.p_background)])
    w = hyp.binomial_weights(hyp.flip_probability(probs, spam).ravel(), shots).reshape(3, bins, shots + 1)
    values, wj = hyp.joint_distribution(hyp.bin_terms(model, shots), w)
    phis, miss_al, fa = hyp.threshold_curve(values, wj[0], wj[2])
    _, miss_sh, _ = hyp.threshold_curve(values, wj[1], wj[2])
    return phis, miss_al, miss_sh, np.maximum(miss_al, miss_sh), fa


def fig3(cfg: RunConfig, out: Path, cache: LineshapeCache, coarse: bool, digest: str, timer) -> list:
    params = cfg.physics.params()
    reach = FIG3["bins"] * FIG3["step"] / 2 + FIG3["step"]
    grid = DetuningGrid.covering(-reach, reach, 0.25)
    with timer.stage("fig3.lineshape"):
        table = cache.tables(params, [FIG3["time"]], grid, method=cfg.lineshape.method)[
            (params.squeezing, FIG3["time"])]
    samples = cfg.statistics.samples // 10 if coarse else cfg.statistics.samples
    exact_rows, mc_rows, summary = [], [], {}
    with timer.stage("fig3.statistics"):
        for k, xi in enumerate(FIG3_SPAM):
            phis, mal, msh, miss, fa = fig3_curves(table, xi)
            for row in zip(phis, mal, msh, miss, fa):
                exact_rows.append(dict(zip(("phi", "miss_aligned", "miss_shifted", "miss_rate",
                                            "false_alarm"), map(float, row)), spam=xi))
            feas = (miss < cfg.statistics.eps1) & (fa < cfg.statistics.eps2)
            i = int(np.argmin(np.maximum(miss / cfg.statistics.eps1, fa / cfg.statistics.eps2)))
            summary[str(xi)] = {"feasible": bool(feas.any()), "best_phi": float(phis[i]),
                                "miss_rate": float(miss[i]), "false_alarm": float(fa[i]),
                                "feasible_phi": [float(phis[feas].min()), float(phis[feas].max())]
                                if feas.any() else None}

            model, p_shift = hyp.position_models(table, FIG3["bins"], FIG3["step"])
            lam_al, lam2 = hyp.sampled_statistics(model, FIG3["shots"], xi, samples, [cfg.seed, 3, k])
            lam_sh, _ = hyp.sampled_statistics(model, FIG3["shots"], xi, samples, [cfg.seed, 3, k, 1],
                                               data_signal=p_shift)
            finite = phis[np.isfinite(phis)]
            for phi in np.linspace(finite.min(), finite.max(), FIG3_MC_POINTS):
                m_al, m_sh = float(np.mean(lam_al >= phi)), float(np.mean(lam_sh >= phi))
                f = float(np.mean(lam2 < phi))
                m = max(m_al, m_sh)
                mc_rows.append({"spam": xi, "phi": float(phi), "miss_rate": m, "false_alarm": f,
                                "miss_rate_se": float(np.sqrt(m * (1 - m) / samples)),
                                "false_alarm_se": float(np.sqrt(f * (1 - f) / samples)),
                                "samples": samples})
    setup = {**FIG3, "spam": list(FIG3_SPAM), "eps1": cfg.statistics.eps1,
             "eps2": cfg.statistics.eps2, "P_bg": table.background,
             "bins_aligned": hyp.bin_detunings(FIG3["bins"], FIG3["step"]).tolist(),
             "bins_shifted": hyp.bin_detunings(FIG3["bins"], FIG3["step"],
                                               hyp.Position.HALF_STEP_SHIFTED).tolist()}
    return [write_csv(out / "fig3_exact.csv", exact_rows, digest),
            write_csv(out / "fig3_mc.csv", mc_rows, digest),
            write_json(out / "fig3_summary.json", {"setup": setup, "by_spam": summary}, digest)]


# fig4 -------------------------------------------------------------------------


def fig4(cfg: RunConfig, out: Path, cache: LineshapeCache, coarse: bool, digest: str, timer) -> list:
    params = cfg.physics.params()
    opt = Optimizer(params, cache, method=cfg.lineshape.method)
    extra = COARSE_SPACE if coarse else {}
    rows, optima, fwhm_rows = [], [], []
    for L in FIG4_BINS:
        space = SearchSpace(bins=L, spam=0.0, eps1=cfg.optimizer.eps1, eps2=cfg.optimizer.eps2,
                            squeezing_db=(cfg.physics.squeezing_db,), refine=False,
                            shots=FIG4_SHOTS, **extra)
        for M in FIG4_SHOTS:
            with timer.stage(f"fig4.L{L}.M{M}"):
                cells = opt.speed_map(space, M, cfg.physics.squeezing_db)
            best = None
            for pt in cells:
                rows.append({"L": L, **pt.row(params)})
                if pt.feasible and (best is None or pt.speed > best.speed):
                    best = pt
            optima.append({"L": L, "M": M, **(best.row(params) if best else {"feasible": False})})
        if L == max(FIG4_BINS):
            for t, w in opt.fwhm_curve(space, cfg.physics.squeezing_db).items():
                fwhm_rows.append({"t_T": t, "fwhm_Omega": w})
    return [write_csv(out / "fig4_maps.csv", rows, digest),
            write_csv(out / "fig4_optima.csv", optima, digest),
            write_csv(out / "fig4_fwhm.csv", fwhm_rows, digest)]


# fig5 -------------------------------------------------------------------------


def fig5(cfg: RunConfig, out: Path, cache: LineshapeCache, coarse: bool, digest: str, timer) -> list:
    params = cfg.physics.params()
    dbs = FIG5_COARSE_DB if coarse else FIG5_DB
    extra = dict(COARSE_SPACE, refine=False) if coarse else {}
    with timer.stage("fig5.sweep"):
        results = sweep_squeezing(FIG5_CURVES, dbs, params, cache, eps1=cfg.optimizer.eps1,
                                  eps2=cfg.optimizer.eps2, mode=cfg.optimizer.mode,
                                  mc_samples=cfg.statistics.samples, seed=cfg.seed, **extra)
    rows = []
    for key in FIG5_CURVES:
        rows.extend(results[key].rows(params))
    columns = ["L", "spam", "squeezing_db", "M", "t_T", "step_Omega", "t_s", "step_Hz", "phi",
               "miss_rate", "false_alarm", "v_internal", "v_Hz_per_s", "feasible"]
    return [write_csv(out / "fig5_curves.csv", rows, digest, columns)]


_BUILDERS = {"fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5}


def reproduce(figure: str, cfg: RunConfig, out_dir, cache: LineshapeCache | None = None,
              coarse: bool = False) -> dict:
    """Write the data files for ``figure`` into ``out_dir`` and return the manifest."""
    if figure not in _BUILDERS:
        raise ValueError(f"unknown figure {figure!r}; choose from {FIGURES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = cache if cache is not None else LineshapeCache(cfg.cache_root)
    digest = figure_digest(cfg, figure, coarse)
    timer = _Timer()
    try:
        files = _BUILDERS[figure](cfg, out, cache, coarse, digest, timer)
    except QLSearchError as exc:
        raise type(exc)(f"{figure}: {exc}") from exc
    manifest = {"figure": figure, "coarse": bool(coarse), "seed": cfg.seed, "config": cfg.to_dict(),
                "versions": versions(),
                "files": {p.name: file_sha256(p) for p in sorted(files)}}
    write_json(out / "manifest.json", manifest, digest)
    write_json(out / "runtimes.json", {"figure": figure, "seconds": timer.runtimes,
                                       "cache_hits": cache.hits, "cache_misses": cache.misses}, digest)
    return manifest


def verify(out_dir, cfg: RunConfig | None = None) -> list[str]:
    """Problems found when re-checking ``out_dir`` against its manifest (empty when clean).

    With ``cfg`` the recorded digest must also match the digest of that config.
    """
    out = Path(out_dir)
    man_path = out / "manifest.json"
    if not man_path.exists():
        return [f"{man_path} missing"]
    manifest = json.loads(man_path.read_text())
    digest = manifest.get("config_digest")
    problems = []
    if cfg is not None:
        expected = figure_digest(cfg, manifest["figure"], manifest["coarse"])
        if expected != digest:
            problems.append(f"config digest {digest} does not match current config {expected}")
    for name, sha in manifest["files"].items():
        path = out / name
        if not path.exists():
            problems.append(f"{name}: missing")
            continue
        if file_sha256(path) != sha:
            problems.append(f"{name}: sha256 mismatch")
        if embedded_digest(path) != digest:
            problems.append(f"{name}: embedded config digest mismatch")
    return problems
