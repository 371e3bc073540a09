"""``qlsearch`` command line interface.

Logs and progress go to stdout; results only go to files.  Exit codes:
0 success, 2 configuration error, 3 computation error, 4 no feasible point.
"""
from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from . import hypothesis as hyp
from . import reproduce as repro
from .config import RunConfig, parse_config, resolve_squeezing
from .errors import ConfigError, NoPeak, QLSearchError, VerificationError
from .lineshape import DetuningGrid, LineshapeCache, fwhm
from .optimizer import COARSE_SPACE, Optimizer, SearchSpace, _frange, sweep_squeezing
from .report import write_csv, write_json

log = logging.getLogger("qlsearch")

EXIT_CONFIG, EXIT_COMPUTE, EXIT_INFEASIBLE = 2, 3, 4


class Infeasible(Exception):
    """Optimisation finished without any feasible point."""


def _float_list(text):
    if text is None:
        return None
    try:
        return [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}") from None


def _range(text, integer=False):
    """``lo:hi[:step]`` (inclusive) or a comma list."""
    if ":" not in text:
        vals = _float_list(text)
    else:
        parts = [float(x) for x in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
            raise click.BadParameter(f"bad range {text!r}")
        vals = list(_frange(*parts))
    return [int(round(v)) for v in vals] if integer else vals


def parse_grid_spec(text: str) -> dict:
    """``"M=1:32;t=5:100:5;s=0.5:15:0.5"`` to optimiser fields; any part may be omitted."""
    out = {}
    names = {"M": "shots", "t": "times", "s": "steps"}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, _, value = part.partition("=")
        if key not in names or not value:
            raise click.BadParameter(f"grid spec part {part!r} must look like M=.., t=.. or s=..")
        out[names[key]] = _range(value, integer=key == "M")
    return out


class _State:
    def __init__(self, config_path, cache_dir, seed):
        self.config_path = config_path
        self.cache_dir = cache_dir
        self.seed = seed

    def config(self, overrides=None) -> RunConfig:
        over = {"seed": self.seed, "cache_root": self.cache_dir, **(overrides or {})}
        return parse_config(self.config_path, over)

    @staticmethod
    def cache(cfg: RunConfig) -> LineshapeCache:
        return LineshapeCache(cfg.cache_root)


def _squeezing_override(db, r):
    return {"physics.squeezing_db": resolve_squeezing(db, r)}


def _out(path, default):
    return Path(path) if path else Path(default)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="JSON run config.")
@click.option("--cache-dir", type=click.Path(file_okay=False),
              help="Lineshape cache root (default: $QLSEARCH_CACHE_DIR or ~/.cache/qlsearch).")
@click.option("--seed", type=int, help="Top-level seed for all Monte Carlo streams.")
@click.option("-v", "--verbose", count=True, help="More log output.")
@click.pass_context
def cli(ctx, config_path, cache_dir, seed, verbose):
    """Search-speed analysis for narrow transitions with quantum logic readout."""
    logging.basicConfig(stream=sys.stdout, format="%(asctime)s %(levelname)s %(message)s",
                        level=logging.DEBUG if verbose > 1 else logging.INFO, force=True)
    ctx.obj = _State(config_path, cache_dir, seed)


@cli.command()
@click.option("--time", "t", type=float, help="Interrogation time in units of T.")
@click.option("--grid", help="Detuning grid lo:hi:step in units of Omega.")
@click.option("--squeezing-db", type=float)
@click.option("--squeezing-r", type=float)
@click.option("--method", type=click.Choice(["expm", "rk"]))
@click.option("--out", type=click.Path(dir_okay=False), help="Output JSON (default <output>/lineshape.json).")
@click.pass_obj
def lineshape(state, t, grid, squeezing_db, squeezing_r, method, out):
    """Signal P0 versus detuning at one interrogation time."""
    cfg = state.config({"lineshape.time": t, "lineshape.grid": grid, "lineshape.method": method,
                        **_squeezing_override(squeezing_db, squeezing_r)})
    try:
        grid_obj = DetuningGrid.parse(cfg.lineshape.grid)
    except ValueError as exc:
        raise ConfigError(f"lineshape.grid: {exc}") from None
    params = cfg.physics.params()
    table = state.cache(cfg).tables(params, [cfg.lineshape.time], grid_obj,
                                    method=cfg.lineshape.method)[(params.squeezing, cfg.lineshape.time)]
    try:
        width = fwhm(table)
    except NoPeak:
        width = None
    payload = {"table": table.to_dict(), "fwhm_Omega": width,
               "fwhm_Hz": None if width is None else params.detuning_to_hz(width),
               "time_s": params.time_to_seconds(table.time), "config": cfg.to_dict()}
    path = write_json(_out(out, Path(cfg.output) / "lineshape.json"), payload, cfg.digest("lineshape"))
    log.info("peak %.4f, background %.4f, FWHM %s -> %s", table.peak, table.background, width, path)


@cli.command("test")
@click.option("--L", "bins", type=int)
@click.option("--M", "shots", type=int)
@click.option("--time", "t", type=float)
@click.option("--step", type=float)
@click.option("--phi", type=float)
@click.option("--spam", type=float)
@click.option("--mode", type=click.Choice(["exact", "mc"]))
@click.option("--samples", type=int)
@click.option("--squeezing-db", type=float)
@click.option("--squeezing-r", type=float)
@click.option("--out", type=click.Path(dir_okay=False))
@click.pass_obj
def test_cmd(state, bins, shots, t, step, phi, spam, mode, samples, squeezing_db, squeezing_r, out):
    """Miss rate and false alarm of one hypothesis-test configuration."""
    cfg = state.config({"statistics.bins": bins, "statistics.shots": shots, "statistics.time": t,
                        "statistics.step": step, "statistics.threshold": phi,
                        "statistics.spam": spam, "statistics.mode": mode,
                        "statistics.samples": samples,
                        **_squeezing_override(squeezing_db, squeezing_r)})
    s = cfg.statistics
    params = cfg.physics.params()
    config = hyp.TestConfig(s.bins, s.shots, s.time, s.step, s.threshold, s.spam)
    reach = s.bins * s.step / 2 + s.step
    table = state.cache(cfg).tables(params, [s.time], DetuningGrid.covering(-reach, reach, 0.25),
                                    method=cfg.lineshape.method)[(params.squeezing, s.time)]
    model, p_shift = hyp.position_models(table, s.bins, s.step)
    report = {"config": cfg.to_dict(), "bins_aligned": config.detunings().tolist(),
              "p_signal": model.p_signal.tolist(), "p_shifted": p_shift.tolist(),
              "p_background": model.p_background}
    if s.mode == "exact":
        worst = hyp.worst_case_miss(config, table)
        d1, d2 = hyp.spam_exact(model, s.shots, s.spam)
        d1s, _ = hyp.spam_exact(model, s.shots, s.spam, data_signal=p_shift)
        report["distributions"] = {"H1_aligned": d1.summary(), "H1_shifted": d1s.summary(),
                                   "H2": d2.summary()}
        report["per_position"] = {k: vars(v) for k, v in worst.per_position.items()}
        report["errors"] = vars(worst.errors)
        report["feasible"] = worst.errors.feasible(s.eps1, s.eps2)
    else:
        al = hyp.spam_monte_carlo(model, s.shots, s.spam, s.threshold, s.samples, [cfg.seed, 0])
        sh = hyp.spam_monte_carlo(model, s.shots, s.spam, s.threshold, s.samples, [cfg.seed, 1],
                                  data_signal=p_shift)
        report["per_position"] = {"aligned": vars(al), "shifted": vars(sh)}
        report["errors"] = {"miss_rate": max(al.miss_rate, sh.miss_rate), "false_alarm": al.false_alarm}
        report["feasible"] = al.feasible(s.eps1, s.eps2) and sh.feasible(s.eps1, s.eps2)
    path = write_json(_out(out, Path(cfg.output) / "test.json"), report, cfg.digest("test"))
    log.info("MR %.4g FA %.4g -> %s", report["errors"]["miss_rate"], report["errors"]["false_alarm"], path)


def _optimizer_overrides(bins, spam, eps1, eps2, db_list, coarse):
    return {"optimizer.bins": bins, "optimizer.spam": spam, "optimizer.eps1": eps1,
            "optimizer.eps2": eps2, "optimizer.squeezing_db": db_list,
            "optimizer.coarse": True if coarse else None}


def _space(cfg: RunConfig, grid_spec: str | None, **kw) -> SearchSpace:
    o = cfg.optimizer
    fields = dict(shots=tuple(int(m) for m in o.shots), times=tuple(o.times), steps=tuple(o.steps))
    if o.coarse:
        fields.update(COARSE_SPACE)
    if grid_spec:
        fields.update({k: tuple(v) for k, v in parse_grid_spec(grid_spec).items()})
    base = dict(bins=o.bins, eps1=o.eps1, eps2=o.eps2, spam=o.spam, squeezing_db=tuple(o.squeezing_db),
                refine=o.refine, time_offset=o.time_offset, mode=o.mode,
                mc_samples=cfg.statistics.samples, seed=cfg.seed)
    base.update(fields)
    base.update(kw)
    try:
        return SearchSpace(**base)
    except ValueError as exc:
        raise ConfigError(f"optimizer: {exc}") from None


_opt_options = [
    click.option("--L", "bins", type=int),
    click.option("--spam", type=float),
    click.option("--eps1", type=float),
    click.option("--eps2", type=float),
    click.option("--grid-spec", help='Search grid, e.g. "M=1:32;t=5:100:5;s=0.5:15:0.5".'),
    click.option("--coarse", is_flag=True, help="Reduced grid for quick runs."),
]


def _with(options):
    def deco(f):
        for opt in reversed(options):
            f = opt(f)
        return f
    return deco


@cli.command()
@_with(_opt_options)
@click.option("--squeezing-db-list", help="Comma-separated squeezing values in dB.")
@click.option("--maps/--no-maps", default=True, help="Also write the full (M, t, step) maps.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory.")
@click.pass_obj
def optimize(state, bins, spam, eps1, eps2, grid_spec, coarse, squeezing_db_list, maps, out):
    """Fastest feasible (M, t, step) per squeezing value."""
    cfg = state.config(_optimizer_overrides(bins, spam, eps1, eps2, _float_list(squeezing_db_list), coarse))
    space = _space(cfg, grid_spec)
    params = cfg.physics.params()
    opt = Optimizer(params, state.cache(cfg), method=cfg.lineshape.method)
    result = opt.optimize(space, with_maps=maps)
    digest = cfg.digest("optimize", grid_spec)
    outdir = _out(out, cfg.output)
    write_csv(outdir / "optimum.csv", result.rows(params), digest,
              ["L", "spam", "squeezing_db", "M", "t_T", "step_Omega", "t_s", "step_Hz", "phi",
               "miss_rate", "false_alarm", "v_internal", "v_Hz_per_s", "feasible"])
    if maps:
        write_json(outdir / "maps.json", {"space": space.to_dict(), "maps": {
            str(db): [pt.row(params) for pt in pts] for db, pts in result.maps.items()}}, digest)
    for db, pt in result.optima.items():
        if pt is None:
            log.info("%g dB: no feasible point", db)
        else:
            log.info("%g dB: M=%d t=%gT step=%g v=%.4g Hz/s", db, pt.shots, pt.time, pt.step,
                     params.speed_to_hz_per_s(pt.speed))
    if all(pt is None for pt in result.optima.values()):
        raise Infeasible("no feasible point for any squeezing value")


@cli.command("speed-map")
@_with(_opt_options)
@click.option("--M", "shots", type=int, required=True)
@click.option("--squeezing-db", type=float)
@click.option("--out", type=click.Path(dir_okay=False))
@click.pass_obj
def speed_map_cmd(state, bins, spam, eps1, eps2, grid_spec, coarse, shots, squeezing_db, out):
    """Speed and feasibility on the (t, step) plane at fixed M, with the FWHM per t."""
    cfg = state.config({**_optimizer_overrides(bins, spam, eps1, eps2, None, coarse),
                        "physics.squeezing_db": squeezing_db})
    db = cfg.physics.squeezing_db
    space = _space(cfg, grid_spec, squeezing_db=(db,), refine=False)
    params = cfg.physics.params()
    opt = Optimizer(params, state.cache(cfg), method=cfg.lineshape.method)
    widths = opt.fwhm_curve(space, db)
    rows = [{**pt.row(params), "fwhm_Omega": widths[pt.time]} for pt in opt.speed_map(space, shots, db)]
    path = write_csv(_out(out, Path(cfg.output) / "speed_map.csv"), rows,
                     cfg.digest("speed-map", shots, grid_spec))
    log.info("%d cells, %d feasible -> %s", len(rows), sum(r["feasible"] for r in rows), path)


@cli.command("sweep-squeezing")
@click.option("--curves", default="1:0,1:0.1,3:0,3:0.1", show_default=True,
              help="Comma-separated L:spam pairs.")
@click.option("--squeezing-db-list", help="Comma-separated squeezing values in dB.")
@click.option("--eps1", type=float)
@click.option("--eps2", type=float)
@click.option("--grid-spec")
@click.option("--coarse", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False))
@click.pass_obj
def sweep_squeezing_cmd(state, curves, squeezing_db_list, eps1, eps2, grid_spec, coarse, out):
    """Optimal speed versus squeezing for several (L, spam) curves."""
    try:
        pairs = [(int(a), float(b)) for a, b in (c.split(":") for c in curves.split(","))]
    except ValueError:
        raise click.BadParameter(f"bad --curves {curves!r}") from None
    cfg = state.config(_optimizer_overrides(None, None, eps1, eps2, _float_list(squeezing_db_list), coarse))
    space = _space(cfg, grid_spec)
    kw = {k: getattr(space, k) for k in ("shots", "times", "steps", "eps1", "eps2", "refine",
                                         "time_offset", "mode", "mc_samples", "seed")}
    params = cfg.physics.params()
    results = sweep_squeezing(pairs, space.squeezing_db, params, state.cache(cfg), **kw)
    rows = [row for key in pairs for row in results[key].rows(params)]
    path = write_csv(_out(out, Path(cfg.output) / "sweep_squeezing.csv"), rows,
                     cfg.digest("sweep-squeezing", curves, grid_spec),
                     ["L", "spam", "squeezing_db", "M", "t_T", "step_Omega", "phi", "miss_rate",
                      "false_alarm", "v_internal", "v_Hz_per_s", "feasible"])
    log.info("wrote %s", path)
    if all(pt is None for res in results.values() for pt in res.optima.values()):
        raise Infeasible("no feasible point on any curve")


@cli.command("reproduce")
@click.argument("figure", type=click.Choice(repro.FIGURES))
@click.option("--coarse", is_flag=True, help="Reduced grids (minutes instead of hours).")
@click.option("--verify", is_flag=True, help="Only re-check an existing output directory.")
@click.option("--out", type=click.Path(file_okay=False), help="Output directory (default <output>/<figure>).")
@click.pass_obj
def reproduce_cmd(state, figure, coarse, verify, out):
    """Write the data behind one figure, with a manifest."""
    cfg = state.config()
    outdir = _out(out, Path(cfg.output) / figure)
    if verify:
        problems = repro.verify(outdir, cfg)
        for p in problems:
            log.error(p)
        if problems:
            raise VerificationError(f"{len(problems)} problem(s) in {outdir}")
        log.info("%s verified", outdir)
        return
    manifest = repro.reproduce(figure, cfg, outdir, state.cache(cfg), coarse=coarse)
    log.info("%s: %d files -> %s", figure, len(manifest["files"]), outdir)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="qlsearch", standalone_mode=False)
    except click.exceptions.Abort:
        return 1
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_CONFIG
    except Infeasible as exc:
        log.warning("%s", exc)
        return EXIT_INFEASIBLE
    except QLSearchError as exc:
        log.error("computation failed: %s", exc)
        click.echo(f"computation failed: {exc}", err=True)
        return EXIT_COMPUTE
    except FileNotFoundError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        return EXIT_CONFIG
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
