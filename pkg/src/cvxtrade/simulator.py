"""Back-test simulator: exact self-financing propagation, grid runner, Pareto set.

One back-test is strictly sequential (each step depends on the previous
state); the grid runner executes independent back-tests concurrently over a
shared immutable timeline and sorts results deterministically.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import HcostParams, TcostCoefficients, hcost, realize_cash_trade, tcost
from .constraints import ConstraintState, violations
from .errors import BankruptcyHalt, DomainError, HistoryError, SpecError
from .market_data import ForecastProvider, MarketTimeline, MonthlyRiskModels
from .metrics import MetricsReport, summarize
from .policies import MarketView, PolicySpec, TradePlan, make_policy
from .risk import cash_benchmark, uniform_benchmark

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PortfolioState:
    """Dollar holdings (assets + cash) at the start of a period."""

    h: np.ndarray
    t_index: int
    label: str = ""

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        object.__setattr__(self, "h", h)
        if self.value <= 0:
            raise DomainError("portfolio value must be positive")

    @property
    def value(self) -> float:
        return float(self.h.sum())

    @property
    def weights(self) -> np.ndarray:
        return self.h / self.value

    @property
    def leverage(self) -> float:
        return float(np.abs(self.h[:-1]).sum() / self.value)


@dataclass
class StepRecord:
    """Realized accounting for one simulated period."""

    t_index: int
    label: str
    value: float                 # v_t before the step
    z: np.ndarray                # realized normalized trades incl. cash
    portfolio_return: float      # R^p over the period
    tcost: float                 # normalized realized transaction cost
    hcost: float                 # normalized realized holding cost
    turnover: float              # ||z_assets||_1 / 2
    leverage: float              # post-trade ||w+z||_1 over assets
    self_financing_residual: float
    return_decomposition_residual: float


@dataclass
class SimParams:
    """Realized-cost parameters and simulation options."""

    tcost_coef: TcostCoefficients
    hcost: HcostParams
    hold_multipliers: np.ndarray | None = None   # per-period, default 1
    external_cash: np.ndarray | None = None      # per-period dollars
    periods_per_year: float = 250.0

    def multiplier(self, t: int) -> float:
        if self.hold_multipliers is None:
            return 1.0
        return float(self.hold_multipliers[t])

    def external(self, t: int) -> float:
        if self.external_cash is None:
            return 0.0
        return float(self.external_cash[t])


def step(state: PortfolioState, requested_asset_trades: np.ndarray,
         timeline: MarketTimeline, params: SimParams) -> tuple:
    """Advance the portfolio one period under realized market data.

    The requested asset trades (normalized by value) are executed in full;
    the cash trade comes from the realized cost functions so the
    self-financing identity holds exactly; holdings then grow by the realized
    returns. Returns (next_state, StepRecord).
    """
    t = state.t_index
    n = timeline.n_assets
    z_assets = np.asarray(requested_asset_trades, dtype=float)
    if z_assets.shape != (n,):
        raise DomainError(f"requested trades shape {z_assets.shape} != ({n},)")
    if not np.all(np.isfinite(z_assets)):
        raise DomainError("requested trades must be finite")
    v = state.value
    w = state.weights

    if timeline.volatilities is None:
        raise SpecError("timeline lacks volatilities needed by the cost model")
    tp = params.tcost_coef.at(timeline.volatilities[t], timeline.volumes[t] / v)
    hp = replace(params.hcost, multiplier=params.multiplier(t))
    ext = params.external(t) / v

    tc = tcost(z_assets, tp)
    w_plus_assets = w[:-1] + z_assets
    hc = hcost(np.concatenate([w_plus_assets, [0.0]]), hp)
    z_cash = realize_cash_trade(z_assets, w, tp, hp, external=ext)
    if hp.cash_borrow > 0:
        hc = hc + hp.multiplier * hp.cash_borrow * max(-(w[-1] + z_cash), 0.0)
    z = np.concatenate([z_assets, [z_cash]])

    u = v * z
    h_plus = state.h + u
    r = timeline.returns[t]
    h_next = (1.0 + r) * h_plus
    v_next = float(h_next.sum())
    label = timeline.periods[t]

    sf_residual = abs(float(z.sum()) + tc + hc - ext) * v
    realized_return = v_next / v - 1.0
    decomposition = float(r @ w + r @ z) - tc - hc + ext
    record = StepRecord(
        t_index=t,
        label=label,
        value=v,
        z=z,
        portfolio_return=realized_return,
        tcost=tc,
        hcost=hc,
        turnover=float(np.abs(z_assets).sum() / 2.0),
        leverage=float(np.abs(w_plus_assets).sum()),
        self_financing_residual=sf_residual,
        return_decomposition_residual=abs(realized_return - decomposition),
    )
    if v_next <= 0:
        raise BankruptcyHalt(f"portfolio value {v_next:.2f} <= 0 after period {label}",
                             period=label, partial=record)
    next_state = PortfolioState(h=h_next, t_index=t + 1,
                                label=timeline.periods[t + 1] if t + 1 < timeline.n_periods
                                else "")
    return next_state, record


@dataclass
class BacktestResult:
    """Per-period series, logs, and summary metrics for one back-test run."""

    periods: list
    values: np.ndarray            # v_t at the start of each simulated period
    final_value: float
    returns: np.ndarray
    trades: np.ndarray            # (T, n+1) realized normalized trades
    holdings: np.ndarray          # (T, n+1) dollar holdings at period starts
    tcosts: np.ndarray
    hcosts: np.ndarray
    turnover: np.ndarray
    leverage: np.ndarray
    benchmark_returns: np.ndarray
    cash_returns: np.ndarray
    metrics: MetricsReport
    violation_log: list = field(default_factory=list)
    fallback_log: list = field(default_factory=list)
    halted: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def fallback_fraction(self) -> float:
        total = len(self.periods)
        return len(self.fallback_log) / total if total else 0.0


def _resolve_benchmark(benchmark, n: int) -> np.ndarray:
    if isinstance(benchmark, str):
        if benchmark == "cash":
            return cash_benchmark(n)
        if benchmark == "uniform":
            return uniform_benchmark(n)
        raise SpecError(f"unknown benchmark {benchmark!r}")
    wb = np.asarray(benchmark, dtype=float)
    if abs(wb.sum() - 1.0) > 1e-9:
        raise SpecError("benchmark weights must sum to one")
    return wb


@dataclass
class BacktestTask:
    """Everything needed to run one back-test (picklable for the grid pool)."""

    policy_spec: PolicySpec
    start: int
    end: int
    initial_value: float
    initial_weights: np.ndarray
    benchmark: object = "cash"
    risk_model_k: int | None = None
    risk_model_window: int = 500
    forecast_sigma_r_sq: float = 0.0005
    forecast_sigma_eps_sq: float = 0.02
    forecast_seed: int = 0
    ma_window: int = 10
    periods_per_year: float = 250.0
    check_violations: bool = True


def run_backtest(task: BacktestTask, timeline: MarketTimeline, params: SimParams,
                 forecast_provider: ForecastProvider | None = None,
                 risk_models: MonthlyRiskModels | None = None) -> BacktestResult:
    """Run one policy through realized data; deterministic per seed.

    Forecast and risk-model providers are built from the task when not
    passed in. The range must leave enough warm-up history for them.
    """
    from .market_data import synth_return_forecast

    t_start = time.perf_counter()
    n = timeline.n_assets
    spec = task.policy_spec
    policy = make_policy(spec)
    wb = _resolve_benchmark(task.benchmark, n)

    needs_forecasts = spec.kind in ("spo", "mpo", "multiscale_mpo")
    if needs_forecasts and forecast_provider is None:
        r_hat = synth_return_forecast(timeline.returns, task.forecast_sigma_r_sq,
                                      task.forecast_sigma_eps_sq, task.forecast_seed)
        forecast_provider = ForecastProvider(timeline, r_hat, ma_window=task.ma_window)
    if needs_forecasts and risk_models is None and task.risk_model_k is not None:
        risk_models = MonthlyRiskModels(timeline, k=task.risk_model_k,
                                        window=task.risk_model_window)
    if needs_forecasts and task.start < forecast_provider.warmup:
        raise HistoryError(
            f"back-test start {task.start} inside the {forecast_provider.warmup}-period "
            "forecast warm-up; provide explicit warm-up history")

    weights = np.asarray(task.initial_weights, dtype=float)
    if abs(weights.sum() - 1.0) > 1e-9:
        raise SpecError("initial weights must sum to one")
    state = PortfolioState(h=task.initial_value * weights, t_index=task.start,
                           label=timeline.periods[task.start])

    horizon = spec.horizon if spec.kind != "hold" else 1
    records, fallbacks, violation_log, holdings = [], [], [], []
    halted = False
    end = min(task.end, timeline.n_periods)
    for t in range(task.start, end):
        view = MarketView(
            t_index=t,
            label=timeline.periods[t],
            prev_label=timeline.periods[t - 1] if t > 0 else None,
            n_assets=n,
            v=state.value,
            benchmark=wb,
            forecasts=forecast_provider.at(t, horizon) if forecast_provider else None,
            risk_model=risk_models.model_for(t) if risk_models else None,
            tcost_coef=params.tcost_coef,
            hcost=replace(params.hcost, multiplier=params.multiplier(t)),
        )
        plan = policy.decide(state.weights, view)
        if plan.fallback is not None:
            fallbacks.append(plan.fallback)
        holdings.append(state.h.copy())
        try:
            state, record = step(state, plan.z[:-1], timeline, params)
        except BankruptcyHalt as halt:
            if halt.partial is not None:
                records.append(halt.partial)
            halted = True
            logger.error("bankruptcy halt at %s", halt.period)
            break
        records.append(record)
        if task.check_violations and spec.constraints:
            # realized cash can drift slightly past the estimated constraints;
            # log at WARN, never fail
            w_plus = holdings[-1] / holdings[-1].sum() + record.z
            cstate = ConstraintState(n_assets=n, v=record.value, benchmark=wb)
            for _, kind, amount in violations(spec.constraints, w_plus, record.z,
                                              cstate, skip_unevaluable=True):
                violation_log.append((record.label, kind, amount))
                logger.warning("realized post-trade weights violate %s by %.3e at %s",
                               kind, amount, record.label)

    if len(records) < 2:
        raise DomainError("back-test produced fewer than two periods")

    idx = [r.t_index for r in records]
    returns = np.array([r.portfolio_return for r in records])
    bench_returns = timeline.returns[idx] @ wb
    cash_returns = timeline.returns[idx, -1]
    values = np.array([r.value for r in records])
    final_value = values[-1] * (1.0 + returns[-1])
    report = summarize(
        returns, bench_returns, cash_returns, task.periods_per_year,
        turnover=np.array([r.turnover for r in records]),
        tcosts=np.array([r.tcost for r in records]),
        hcosts=np.array([r.hcost for r in records]),
        values=np.concatenate([values, [final_value]]),
    )
    return BacktestResult(
        periods=[r.label for r in records],
        values=values,
        final_value=final_value,
        returns=returns,
        trades=np.stack([r.z for r in records]),
        holdings=np.stack(holdings[:len(records)]),
        tcosts=np.array([r.tcost for r in records]),
        hcosts=np.array([r.hcost for r in records]),
        turnover=np.array([r.turnover for r in records]),
        leverage=np.array([r.leverage for r in records]),
        benchmark_returns=bench_returns,
        cash_returns=cash_returns,
        metrics=report,
        violation_log=violation_log,
        fallback_log=fallbacks,
        halted=halted,
        metadata={
            "seed": task.forecast_seed,
            "wall_time": time.perf_counter() - t_start,
            "start": task.start,
            "end": end,
        },
    )


# ---------------------------------------------------------------------------
# Hyper-parameter grid
# ---------------------------------------------------------------------------

@dataclass
class GridPoint:
    gamma_risk: float
    gamma_trade: float
    gamma_hold: float

    def key(self) -> tuple:
        return (self.gamma_risk, self.gamma_trade, self.gamma_hold)


def make_grid(gamma_risk, gamma_trade, gamma_hold=(1.0,)) -> list:
    """Cartesian hyper-parameter grid in deterministic order."""
    points = [GridPoint(float(gr), float(gt), float(gh))
              for gr in gamma_risk for gt in gamma_trade for gh in gamma_hold]
    if not points:
        raise SpecError("hyper-parameter grid is empty")
    return points


@dataclass
class GridRow:
    """One grid point's outcome: hyper-parameters plus summary metrics."""

    point: GridPoint
    status: str
    excess_return: float = float("nan")
    excess_risk: float = float("nan")
    active_return: float = float("nan")
    active_risk: float = float("nan")
    sharpe_ratio: float = float("nan")
    information_ratio: float = float("nan")
    turnover: float = float("nan")
    mean_tcost: float = float("nan")
    mean_hcost: float = float("nan")
    max_drawdown: float = float("nan")
    final_value: float = float("nan")
    fallback_fraction: float = float("nan")
    error: str = ""

    @classmethod
    def from_result(cls, point: GridPoint, result: BacktestResult) -> "GridRow":
        m = result.metrics
        return cls(
            point=point,
            status="halted" if result.halted else "ok",
            excess_return=m.annualized("excess_return"),
            excess_risk=m.annualized("excess_risk"),
            active_return=m.annualized("active_return"),
            active_risk=m.annualized("active_risk"),
            sharpe_ratio=m.annualized("sharpe_ratio"),
            information_ratio=m.annualized("information_ratio"),
            turnover=m.annualized("mean_turnover"),
            mean_tcost=m.annualized("mean_tcost"),
            mean_hcost=m.annualized("mean_hcost"),
            max_drawdown=m.max_drawdown,
            final_value=result.final_value,
            fallback_fraction=result.fallback_fraction,
        )


def _run_grid_point(args) -> GridRow:
    task, point, timeline, params = args
    spec = replace(task.policy_spec, gamma_risk=point.gamma_risk,
                   gamma_trade=point.gamma_trade, gamma_hold=point.gamma_hold)
    point_task = replace(task, policy_spec=spec)
    try:
        result = run_backtest(point_task, timeline, params)
        return GridRow.from_result(point, result)
    except Exception as exc:  # record the failure, keep the grid going
        logger.error("grid point %s failed: %s", point.key(), exc)
        return GridRow(point=point, status="failed", error=str(exc))


def run_grid(task: BacktestTask, grid: list, timeline: MarketTimeline,
             params: SimParams, jobs: int = 1) -> list:
    """One back-test per grid point, optionally in parallel; stable ordering."""
    ordered = sorted(grid, key=lambda p: p.key())
    payload = [(task, point, timeline, params) for point in ordered]
    if jobs <= 1 or len(ordered) == 1:
        rows = [_run_grid_point(p) for p in payload]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_grid_point, payload, chunksize=1))
    return sorted(rows, key=lambda r: r.point.key())


def pareto_rows(rows: list) -> list:
    """Non-dominated grid rows: nothing with lower risk and higher return.

    Dominance uses annualized excess risk (lower better) and excess return
    (higher better); output is sorted by ascending risk.
    """
    ok = [r for r in rows if r.status == "ok" and np.isfinite(r.excess_risk)
          and np.isfinite(r.excess_return)]
    out = []
    for r in ok:
        dominated = any(
            (o.excess_risk <= r.excess_risk and o.excess_return >= r.excess_return
             and (o.excess_risk < r.excess_risk or o.excess_return > r.excess_return))
            for o in ok)
        if not dominated:
            out.append(r)
    return sorted(out, key=lambda r: (r.excess_risk, r.excess_return, r.point.key()))


def config_hash(payload: dict) -> str:
    """Stable hash of a JSON-serializable configuration."""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]
