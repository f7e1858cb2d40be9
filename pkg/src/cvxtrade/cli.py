"""Command-line front end: ingest data, run back-tests, run hyper-parameter grids.

Exit codes: 0 success, 2 configuration error, 3 simulation halt (partial
output written), 4 systemic solver failure (more than half the periods fell
back to zero trades).
"""

from __future__ import annotations

import logging
import os
import sys
import time

import click

from . import __version__
from .config import CACHE_ENV, load_config
from .errors import BankruptcyHalt, ConfigError, CvxTradeError, IngestError
from .market_data import ingest_csv, save_cache
from .reports import write_backtest_outputs, write_grid_outputs
from .simulator import GridRow, run_backtest, run_grid

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_HALT = 3
EXIT_SOLVER = 4


@click.group()
@click.version_option(__version__, prog_name="cvxtrade")
@click.option("-v", "--verbose", is_flag=True, help="Enable info-level logging.")
def main(verbose):
    """Multi-period trading engine: back-tests and hyper-parameter search."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--returns", required=True, type=click.Path(), help="returns.csv path")
@click.option("--volumes", required=True, type=click.Path(), help="volumes.csv path")
@click.option("--cash", required=True, type=click.Path(), help="cash.csv path")
@click.option("--prices", type=click.Path(), default=None, help="prices.csv path (optional)")
@click.option("--out", required=True, type=click.Path(), help="cache directory to write")
def ingest(returns, volumes, cash, prices, out):
    """Validate the CSV series and store a columnar timeline cache."""
    try:
        timeline = ingest_csv(returns, volumes, cash, prices)
    except IngestError as exc:
        click.echo(f"ingest error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    cache_hash = save_cache(timeline, out)
    click.echo(f"ingested T={timeline.n_periods}, n={timeline.n_assets} "
               f"({timeline.periods[0]} .. {timeline.periods[-1]})")
    click.echo(f"cache {out} hash {cache_hash}")


def _load(config_path):
    try:
        return load_config(config_path)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
def backtest(config_path, out):
    """Run one back-test and write result CSVs, metrics, and a value figure."""
    cfg = _load(config_path)
    seeds = {"forecast": cfg.task.forecast_seed}
    try:
        result = run_backtest(cfg.task, cfg.timeline, cfg.sim_params)
    except BankruptcyHalt as halt:
        click.echo(f"simulation halted: {halt}", err=True)
        sys.exit(EXIT_HALT)
    except CvxTradeError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    row = GridRow.from_result(_point_of(cfg), result)
    paths = write_backtest_outputs(result, row, out, cfg.hash, seeds)
    m = result.metrics
    click.echo(f"periods={len(result.periods)} "
               f"excess_return={m.annualized('excess_return'):.4%} "
               f"excess_risk={m.annualized('excess_risk'):.4%} "
               f"turnover={m.annualized('mean_turnover'):.2%}")
    click.echo(f"wrote {paths['summary']}")
    if result.halted:
        sys.exit(EXIT_HALT)
    if result.fallback_fraction > 0.5:
        click.echo("solver fell back on more than half the periods", err=True)
        sys.exit(EXIT_SOLVER)


def _point_of(cfg):
    from .simulator import GridPoint
    from .policies import gamma_at

    spec = cfg.policy_spec

    def scalar(g):
        try:
            return gamma_at(g, cfg.task.start)
        except Exception:
            return float("nan")

    return GridPoint(scalar(spec.gamma_risk), scalar(spec.gamma_trade),
                     scalar(spec.gamma_hold))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--jobs", type=int, default=None, help="parallel back-tests")
@click.option("--out", required=True, type=click.Path())
def grid(config_path, jobs, out):
    """Run the hyper-parameter grid, write the results table, Pareto set, and plot."""
    cfg = _load(config_path)
    if cfg.grid is None:
        click.echo("config error: no grid section in config", err=True)
        sys.exit(EXIT_CONFIG)
    n_jobs = jobs if jobs is not None else cfg.jobs
    start = time.perf_counter()
    rows = run_grid(cfg.task, cfg.grid, cfg.timeline, cfg.sim_params, jobs=n_jobs)
    wall = time.perf_counter() - start
    seeds = {"forecast": cfg.task.forecast_seed}
    paths = write_grid_outputs(rows, out, cfg.hash, seeds, wall)
    n_ok = sum(r.status == "ok" for r in rows)
    click.echo(f"grid complete: {n_ok}/{len(rows)} ok in {wall:.1f}s "
               f"with --jobs={n_jobs}")
    click.echo(f"wrote {paths['results']}, {paths['pareto']}, {paths['frontier']}")
    if n_ok == 0:
        sys.exit(EXIT_SOLVER)


if __name__ == "__main__":
    main()
