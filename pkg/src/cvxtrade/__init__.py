"""cvxtrade: multi-period portfolio trading via convex optimization.

A back-test engine built around a simple dynamic model of trading: exact
self-financing accounting with separable transaction costs and holding
costs, performance metrics, convex single-period and multi-period trading
policies, and a parallel hyper-parameter grid search with Pareto-frontier
extraction.
"""

__version__ = "0.1.0"

from .costs import HcostParams, TcostCoefficients, TcostParams, hcost, realize_cash_trade, tcost
from .constraints import ConstraintSpec, ConstraintState, build_holding_constraint, \
    build_trading_constraint, soften
from .errors import (
    BankruptcyHalt,
    CanonError,
    ConfigError,
    CvxTradeError,
    DomainError,
    HistoryError,
    IngestError,
    ModelError,
    SpecError,
)
from .market_data import (
    CASH,
    FactorRiskModel,
    ForecastProvider,
    ForecastSet,
    MarketTimeline,
    MonthlyRiskModels,
    estimate_factor_risk,
    estimate_volatility,
    export_csv,
    forecast_alpha,
    forecast_moving_average,
    ingest_csv,
    perturb,
    synth_return_forecast,
    synthetic_timeline,
)
from .metrics import MetricsReport, growth_rates, max_drawdown, portfolio_returns, summarize
from .policies import (
    FallbackEvent,
    HoldPolicy,
    MarketView,
    MpoPolicy,
    MultiScaleMpoPolicy,
    PeriodicRebalancePolicy,
    PolicySpec,
    SpoPolicy,
    TradePlan,
    make_policy,
    restrict_k_trades,
    restrict_min_trade,
)
from .risk import RiskSpec, build_risk_term, cash_benchmark, evaluate_risk, uniform_benchmark
from .simulator import (
    BacktestResult,
    BacktestTask,
    GridPoint,
    GridRow,
    PortfolioState,
    SimParams,
    StepRecord,
    make_grid,
    pareto_rows,
    run_backtest,
    run_grid,
    step,
)

__all__ = [name for name in dir() if not name.startswith("_")]
