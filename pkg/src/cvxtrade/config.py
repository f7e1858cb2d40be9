"""Run configuration: a single JSON file driving ingest, back-tests, and grids.

The grammar is documented in the README. Everything is validated here and
turned into the engine objects (timeline, policy spec, cost params, grid);
any inconsistency raises :class:`ConfigError`, which the CLI maps to exit 2.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .costs import HcostParams, TcostCoefficients
from .constraints import ConstraintSpec
from .errors import CvxTradeError, ConfigError
from .market_data import MarketTimeline, ingest_csv, load_cache
from .policies import PolicySpec
from .risk import RiskSpec
from .simulator import BacktestTask, GridPoint, SimParams, config_hash, make_grid

CACHE_ENV = "CVXTRADE_CACHE_DIR"


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing {key!r} in {where}")
    return mapping[key]


def _parse_risk(entries) -> tuple:
    specs = []
    for i, raw in enumerate(entries or ()):
        data = dict(raw)
        kind = _require(data, "kind", f"risk[{i}]")
        kwargs = {"kind": kind, "gamma": float(data.pop("gamma", 1.0))}
        data.pop("kind")
        for key in ("sigma", "rho", "benchmark"):
            if key in data:
                kwargs[key] = np.asarray(data.pop(key), dtype=float)
        if "scenarios" in data:
            kwargs["scenarios"] = tuple(np.asarray(S, dtype=float)
                                        for S in data.pop("scenarios"))
        if "transform" in data:
            mode, param = data.pop("transform")
            kwargs["transform"] = (str(mode), float(param))
        if "kappa" in data:
            kwargs["kappa"] = float(data.pop("kappa"))
        if data:
            raise ConfigError(f"unknown risk keys {sorted(data)} in risk[{i}]")
        try:
            specs.append(RiskSpec(**kwargs))
        except CvxTradeError as exc:
            raise ConfigError(f"bad risk[{i}]: {exc}") from exc
    return tuple(specs)


def _parse_constraints(entries) -> tuple:
    specs = []
    for i, raw in enumerate(entries or ()):
        data = dict(raw)
        kind = _require(data, "kind", f"constraints[{i}]")
        try:
            specs.append(ConstraintSpec(**data))
        except (CvxTradeError, TypeError) as exc:
            raise ConfigError(f"bad constraint[{i}] ({kind}): {exc}") from exc
    return tuple(specs)


def parse_policy(data: dict) -> tuple:
    data = dict(data)
    kind = _require(data, "kind", "policy")
    soft = []
    for raw_spec, priority in data.pop("soft_constraints", ()):
        soft.append((_parse_constraints([raw_spec])[0], float(priority)))
    kwargs = {
        "kind": kind,
        "risk": _parse_risk(data.pop("risk", ())),
        "constraints": _parse_constraints(data.pop("constraints", ())),
        "soft_constraints": tuple(soft),
    }
    data.pop("kind")
    passthrough = ("gamma_risk", "gamma_trade", "gamma_hold", "horizon", "terminal",
                   "t_med", "t_long", "min_trade_eps", "max_k_trades",
                   "self_financing", "framing", "rebalance_target",
                   "rebalance_schedule", "solver_tol")
    for key in passthrough:
        if key in data:
            kwargs[key] = data.pop(key)
    benchmark = data.pop("benchmark", "cash")
    if data:
        raise ConfigError(f"unknown policy keys {sorted(data)}")
    if isinstance(kwargs.get("rebalance_target"), list):
        kwargs["rebalance_target"] = np.asarray(kwargs["rebalance_target"], dtype=float)
    if isinstance(kwargs.get("terminal"), list):
        kwargs["terminal"] = np.asarray(kwargs["terminal"], dtype=float)
    try:
        return PolicySpec(**kwargs), benchmark
    except CvxTradeError as exc:
        raise ConfigError(f"bad policy: {exc}") from exc


@dataclass
class RunConfig:
    """Validated configuration plus the derived engine objects."""

    raw: dict
    timeline: MarketTimeline
    policy_spec: PolicySpec
    benchmark: object
    sim_params: SimParams
    task: BacktestTask
    grid: list | None
    jobs: int
    hash: str

    @property
    def has_grid(self) -> bool:
        return self.grid is not None


def _load_timeline(data: dict) -> MarketTimeline:
    if "cache" in data:
        cache = data["cache"]
        if not os.path.isabs(cache) and not os.path.exists(cache):
            root = os.environ.get(CACHE_ENV, ".")
            cache = os.path.join(root, cache)
        if not os.path.isdir(cache):
            raise ConfigError(f"timeline cache {cache!r} not found")
        return load_cache(cache)
    for key in ("returns", "volumes", "cash"):
        path = _require(data, key, "data")
        if not os.path.exists(path):
            raise ConfigError(f"data file {path!r} does not exist")
    prices = data.get("prices")
    if prices is not None and not os.path.exists(prices):
        raise ConfigError(f"data file {prices!r} does not exist")
    try:
        return ingest_csv(data["returns"], data["volumes"], data["cash"], prices)
    except CvxTradeError as exc:
        raise ConfigError(f"ingest failed: {exc}") from exc


def _resolve_range(data: dict, timeline: MarketTimeline, warmup: int) -> tuple:
    rng = data.get("range", {})

    def to_index(value, default):
        if value is None:
            return default
        if isinstance(value, int):
            return value
        try:
            return timeline.periods.index(value)
        except ValueError:
            raise ConfigError(f"range date {value!r} not in timeline") from None

    start = to_index(rng.get("start"), warmup)
    end = to_index(rng.get("end"), timeline.n_periods - 1) + 1 \
        if rng.get("end") is not None else timeline.n_periods
    if not 0 <= start < end <= timeline.n_periods:
        raise ConfigError(f"bad range [{start}, {end}) for T={timeline.n_periods}")
    return start, end


def _initial_weights(spec, n: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "uniform":
            w = np.full(n + 1, 1.0 / n)
            w[-1] = 0.0
            return w
        if spec == "cash":
            w = np.zeros(n + 1)
            w[-1] = 1.0
            return w
        raise ConfigError(f"unknown initial weights {spec!r}")
    w = np.asarray(spec, dtype=float)
    if w.shape != (n + 1,) or abs(w.sum() - 1.0) > 1e-9:
        raise ConfigError("initial weights must be (n+1,) and sum to one")
    return w


def load_config(path) -> RunConfig:
    """Parse, validate, and materialize a run configuration file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc

    timeline = _load_timeline(_require(raw, "data", "config"))
    n = timeline.n_assets

    policy_spec, benchmark = parse_policy(_require(raw, "policy", "config"))

    costs = raw.get("costs", {})
    try:
        tcoef = TcostCoefficients.build(
            n,
            half_spread=costs.get("half_spread", 0.0),
            impact=costs.get("impact", 0.0),
            asymmetry=costs.get("asymmetry", 0.0),
            quad=costs.get("quad"),
        )
        hparams = HcostParams.build(
            n,
            borrow_fee=costs.get("borrow_fee", 0.0),
            fund_fee=costs.get("fund_fee", 0.0),
            dividend=costs.get("dividend", 0.0),
            cash_borrow=costs.get("cash_borrow", 0.0),
        )
    except CvxTradeError as exc:
        raise ConfigError(f"bad costs: {exc}") from exc

    metrics_cfg = raw.get("metrics", {})
    params = SimParams(tcost_coef=tcoef, hcost=hparams,
                       periods_per_year=float(metrics_cfg.get("periods_per_year", 250.0)))

    forecasts = raw.get("forecasts", {})
    ma_window = int(forecasts.get("ma_window", 10))
    risk_model = raw.get("risk_model")
    warmup = ma_window + 1
    if risk_model is not None:
        warmup = max(warmup, int(risk_model.get("window", 500)))
    if policy_spec.kind in ("hold", "periodic_rebalance"):
        warmup = 0

    start, end = _resolve_range(raw, timeline, warmup)

    initial = raw.get("initial", {})
    task = BacktestTask(
        policy_spec=policy_spec,
        start=start,
        end=end,
        initial_value=float(initial.get("value", 1e8)),
        initial_weights=_initial_weights(initial.get("weights", "uniform"), n),
        benchmark=benchmark,
        risk_model_k=None if risk_model is None else int(risk_model.get("k", 15)),
        risk_model_window=500 if risk_model is None else int(risk_model.get("window", 500)),
        forecast_sigma_r_sq=float(forecasts.get("sigma_r_sq", 0.0005)),
        forecast_sigma_eps_sq=float(forecasts.get("sigma_eps_sq", 0.02)),
        forecast_seed=int(forecasts.get("seed", 0)),
        ma_window=ma_window,
        periods_per_year=params.periods_per_year,
    )

    grid = None
    if "grid" in raw:
        g = raw["grid"]
        try:
            grid = make_grid(g.get("gamma_risk", (1.0,)), g.get("gamma_trade", (1.0,)),
                             g.get("gamma_hold", (1.0,)))
        except CvxTradeError as exc:
            raise ConfigError(f"bad grid: {exc}") from exc

    return RunConfig(
        raw=raw,
        timeline=timeline,
        policy_spec=policy_spec,
        benchmark=benchmark,
        sim_params=params,
        task=task,
        grid=grid,
        jobs=int(raw.get("jobs", 1)),
        hash=config_hash(raw),
    )
