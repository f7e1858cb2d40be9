"""Result files: delimited CSV outputs plus static matplotlib figures.

All delimited output is written with 17 significant digits so reruns with
identical seeds are byte-identical; figures are SVG with the embedded
timestamp stripped for the same reason.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "cvxtrade"

import matplotlib.pyplot as plt
import numpy as np

from .metrics import write_report_csv, write_report_json
from .simulator import BacktestResult, GridRow, pareto_rows

_G = "%.17g"

SUMMARY_COLUMNS = ("gamma_risk", "gamma_trade", "gamma_hold", "status",
                   "excess_return", "excess_risk", "active_return", "active_risk",
                   "sharpe_ratio", "information_ratio", "turnover", "mean_tcost",
                   "mean_hcost", "max_drawdown", "final_value", "fallback_fraction",
                   "error")


def write_period_csv(result: BacktestResult, path) -> None:
    """Per-period series: date,value,return,tcost,hcost,turnover,leverage."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("date", "value", "return", "tcost", "hcost",
                         "turnover", "leverage"))
        for i, date in enumerate(result.periods):
            writer.writerow((
                date, _G % result.values[i], _G % result.returns[i],
                _G % result.tcosts[i], _G % result.hcosts[i],
                _G % result.turnover[i], _G % result.leverage[i]))


def _row_values(row: GridRow):
    return (
        _G % row.point.gamma_risk, _G % row.point.gamma_trade, _G % row.point.gamma_hold,
        row.status, _G % row.excess_return, _G % row.excess_risk,
        _G % row.active_return, _G % row.active_risk, _G % row.sharpe_ratio,
        _G % row.information_ratio, _G % row.turnover, _G % row.mean_tcost,
        _G % row.mean_hcost, _G % row.max_drawdown, _G % row.final_value,
        _G % row.fallback_fraction, row.error)


def write_summary_csv(rows, path) -> None:
    """One row per run: hyper-parameters plus annualized metrics."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(_row_values(row))


def write_pareto_csv(rows, path) -> None:
    """Pareto-optimal points by ascending risk: hyper-parameters and outcomes."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("gamma_risk", "gamma_trade", "gamma_hold",
                         "excess_return", "excess_risk"))
        for row in rows:
            writer.writerow((_G % row.point.gamma_risk, _G % row.point.gamma_trade,
                             _G % row.point.gamma_hold, _G % row.excess_return,
                             _G % row.excess_risk))


def write_manifest(path, config_hash: str, seeds: dict, extra: dict | None = None) -> None:
    import datetime

    payload = {
        "config_hash": config_hash,
        "seeds": seeds,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def frontier_plot(rows, path, title="risk-return frontier") -> int:
    """Scatter of grid outcomes with the Pareto frontier; returns clipped count.

    Points far outside the bulk of the results do not fit in the plot; they
    are clipped to keep the frontier readable and counted in the corner note.
    """
    ok = [r for r in rows if r.status == "ok" and np.isfinite(r.excess_risk)
          and np.isfinite(r.excess_return)]
    fig, ax = plt.subplots(figsize=(8, 5.5))
    clipped = 0
    if ok:
        risk = np.array([r.excess_risk for r in ok])
        ret = np.array([r.excess_return for r in ok])
        pareto = pareto_rows(ok)
        lo_r, hi_r = np.percentile(risk, [0, 90])
        lo_e, hi_e = np.percentile(ret, [5, 100])
        span_r = max(hi_r - lo_r, 1e-6)
        span_e = max(hi_e - lo_e, 1e-6)
        xlim = (max(0.0, lo_r - 0.05 * span_r), hi_r + 0.15 * span_r)
        ylim = (lo_e - 0.1 * span_e, hi_e + 0.1 * span_e)
        inside = ((risk >= xlim[0]) & (risk <= xlim[1])
                  & (ret >= ylim[0]) & (ret <= ylim[1]))
        clipped = int((~inside).sum())
        ax.scatter(risk[inside], ret[inside], s=18, alpha=0.7, label="grid points")
        if pareto:
            ax.plot([r.excess_risk for r in pareto], [r.excess_return for r in pareto],
                    "o-", color="tab:red", markersize=5, label="Pareto frontier")
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        if clipped:
            ax.annotate(f"{clipped} point(s) outside plot range",
                        xy=(0.02, 0.02), xycoords="axes fraction", fontsize=8)
        ax.legend(loc="lower right")
    ax.set_xlabel("annualized excess risk")
    ax.set_ylabel("annualized excess return")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    _save(fig, path)
    return clipped


def value_plot(result: BacktestResult, path, title="portfolio value") -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    values = np.concatenate([result.values, [result.final_value]])
    ax.plot(np.arange(values.size), values, lw=1.2)
    ticks = np.linspace(0, values.size - 1, min(8, values.size)).astype(int)
    labels = [result.periods[min(i, len(result.periods) - 1)] for i in ticks]
    ax.set_xticks(ticks)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("value ($)")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def write_backtest_outputs(result: BacktestResult, row: GridRow, out_dir,
                           config_hash: str, seeds: dict) -> dict:
    """Standard backtest artifact set; returns the path map."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "periods": os.path.join(out_dir, "periods.csv"),
        "summary": os.path.join(out_dir, "summary.csv"),
        "metrics": os.path.join(out_dir, "metrics.csv"),
        "metrics_json": os.path.join(out_dir, "metrics.json"),
        "value_plot": os.path.join(out_dir, "value.svg"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    write_period_csv(result, paths["periods"])
    write_summary_csv([row], paths["summary"])
    write_report_csv(result.metrics, paths["metrics"])
    write_report_json(result.metrics, paths["metrics_json"])
    value_plot(result, paths["value_plot"])
    write_manifest(paths["manifest"], config_hash, seeds,
                   extra={"wall_time": result.metadata.get("wall_time"),
                          "halted": result.halted,
                          "fallback_fraction": result.fallback_fraction})
    return paths


def write_grid_outputs(rows, out_dir, config_hash: str, seeds: dict,
                       wall_time: float) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "results": os.path.join(out_dir, "results.csv"),
        "pareto": os.path.join(out_dir, "pareto.csv"),
        "frontier": os.path.join(out_dir, "frontier.svg"),
        "manifest": os.path.join(out_dir, "manifest.json"),
    }
    write_summary_csv(rows, paths["results"])
    pareto = pareto_rows(rows)
    write_pareto_csv(pareto, paths["pareto"])
    clipped = frontier_plot(rows, paths["frontier"])
    write_manifest(paths["manifest"], config_hash, seeds,
                   extra={"wall_time": wall_time, "n_rows": len(rows),
                          "n_pareto": len(pareto), "clipped_points": clipped})
    return paths
