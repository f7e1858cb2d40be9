"""Performance statistics for realized value and return series.

Conventions: per-period means and maximum-likelihood standard deviations
(1/T divisor) by default, annualized by P and sqrt(P). Active quantities are
relative to a benchmark return series, excess quantities relative to cash.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def portfolio_returns(values) -> np.ndarray:
    """Fractional per-period returns (v_{t+1} - v_t) / v_t of a value series."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.shape[0] < 2:
        raise DomainError("need a 1-D series of at least two portfolio values")
    if np.any(values <= 0):
        raise DomainError("portfolio values must be positive")
    return np.diff(values) / values[:-1]


def growth_rates(returns) -> np.ndarray:
    """Per-period growth rates (log-returns) log(1 + R)."""
    returns = np.asarray(returns, dtype=float)
    if np.any(1.0 + returns <= 0):
        raise DomainError("growth rate undefined for returns <= -1")
    return np.log1p(returns)


def _std_ml(x: np.ndarray, ddof: int = 0) -> float:
    return float(np.std(x, ddof=ddof))


def max_drawdown(values) -> float:
    """Largest peak-to-trough fractional loss of a value series.

    Reporting convenience only; not part of the trading model.
    """
    values = np.asarray(values, dtype=float)
    peaks = np.maximum.accumulate(values)
    return float(np.max(1.0 - values / peaks))


@dataclass(frozen=True)
class MetricsReport:
    """Per-period performance statistics plus the annualization factor."""

    mean_return: float
    mean_growth_rate: float
    volatility: float
    quadratic_risk: float
    active_return: float
    active_risk: float
    excess_return: float
    excess_risk: float
    information_ratio: float
    sharpe_ratio: float
    ir_degenerate: bool
    sr_degenerate: bool
    mean_turnover: float
    mean_tcost: float
    mean_hcost: float
    max_drawdown: float
    periods_per_year: float

    _SCALE_P = ("mean_return", "mean_growth_rate", "quadratic_risk", "active_return",
                "excess_return", "mean_turnover", "mean_tcost", "mean_hcost")
    _SCALE_SQRT_P = ("volatility", "active_risk", "excess_risk",
                     "information_ratio", "sharpe_ratio")

    def annualized(self, name: str) -> float:
        value = getattr(self, name)
        if name in self._SCALE_P:
            return value * self.periods_per_year
        if name in self._SCALE_SQRT_P:
            return value * math.sqrt(self.periods_per_year)
        return value

    _ROW_ORDER = ("mean_return", "mean_growth_rate", "volatility", "quadratic_risk",
                  "active_return", "active_risk", "excess_return", "excess_risk",
                  "information_ratio", "sharpe_ratio", "mean_turnover", "mean_tcost",
                  "mean_hcost", "max_drawdown")

    def rows(self):
        """(name, per_period, annualized) rows for the report CSV."""
        return [(name, getattr(self, name), self.annualized(name))
                for name in self._ROW_ORDER]

    def to_dict(self) -> dict:
        data = {name: val for name, val, _ in self.rows()}
        data.update({name + "_annual": ann for name, _, ann in self.rows()})
        data["ir_degenerate"] = self.ir_degenerate
        data["sr_degenerate"] = self.sr_degenerate
        data["periods_per_year"] = self.periods_per_year
        return data


def _ratio(mean: float, std: float):
    if std > 0:
        return mean / std, False
    if mean == 0.0:
        return 0.0, True
    return math.copysign(math.inf, mean), True


def summarize(returns, benchmark_returns, cash_returns, periods_per_year: float = 250.0,
              turnover=None, tcosts=None, hcosts=None, values=None,
              ddof: int = 0) -> MetricsReport:
    """Compute the full metrics report from aligned per-period series.

    ``ddof=0`` gives the maximum-likelihood standard deviation; pass 1 for
    the unbiased variant. Degenerate ratios (zero active/excess risk) are
    reported as 0 or +/-inf with the matching flag set.
    """
    returns = np.asarray(returns, dtype=float)
    benchmark_returns = np.asarray(benchmark_returns, dtype=float)
    cash_returns = np.asarray(cash_returns, dtype=float)
    T = returns.shape[0]
    if T < 2:
        raise DomainError("need at least two periods to summarize")
    if benchmark_returns.shape != returns.shape or cash_returns.shape != returns.shape:
        raise DomainError("return series lengths differ")

    active = returns - benchmark_returns
    excess = returns - cash_returns
    vol = _std_ml(returns, ddof)
    act_std = _std_ml(active, ddof)
    exc_std = _std_ml(excess, ddof)
    ir, ir_flag = _ratio(float(active.mean()), act_std)
    sr, sr_flag = _ratio(float(excess.mean()), exc_std)

    def mean_or_zero(series):
        return float(np.mean(series)) if series is not None else 0.0

    return MetricsReport(
        mean_return=float(returns.mean()),
        mean_growth_rate=float(growth_rates(returns).mean()),
        volatility=vol,
        quadratic_risk=vol ** 2,
        active_return=float(active.mean()),
        active_risk=act_std,
        excess_return=float(excess.mean()),
        excess_risk=exc_std,
        information_ratio=ir,
        sharpe_ratio=sr,
        ir_degenerate=ir_flag,
        sr_degenerate=sr_flag,
        mean_turnover=mean_or_zero(turnover),
        mean_tcost=mean_or_zero(tcosts),
        mean_hcost=mean_or_zero(hcosts),
        max_drawdown=max_drawdown(values) if values is not None else float("nan"),
        periods_per_year=float(periods_per_year),
    )


def write_report_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("name", "per_period", "annualized"))
        for name, per_period, annual in report.rows():
            writer.writerow((name, "%.17g" % per_period, "%.17g" % annual))


def write_report_json(report: MetricsReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
