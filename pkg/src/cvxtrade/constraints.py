"""Holding and trading constraints, plus conversion to soft penalties.

Builders take a declarative :class:`ConstraintSpec` and the state needed for
the period (post-trade weight expression, value, per-period data) and emit
convex constraint objects from the solver catalog. With ``target='active'``
a holding constraint binds the active holdings x - w_b (shifted back onto
the simplex through the cash slot) instead of the absolute holdings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costs import TcostParams
from .errors import SpecError
from .solver import (
    AbsLeq,
    Affine,
    CostBudgetLeq,
    EqZero,
    LeqZero,
    NormOneLeq,
    SoftConstraintTerm,
    SumKLargestLeq,
    constant,
)

HOLDING_KINDS = ("long_only", "leverage", "cap_fraction", "position_box", "min_cash",
                 "no_hold", "beta_neutral", "factor_neutral", "stress",
                 "liquidation_loss", "concentration")
TRADING_KINDS = ("turnover_limit", "volume_participation", "no_buy", "no_sell", "no_trade")


@dataclass
class ConstraintSpec:
    """One constraint: a kind plus its parameters.

    Only the fields relevant to the kind are read; invalid parameters are
    rejected at construction.
    """

    kind: str
    target: str = "absolute"
    include_cash: bool = True          # long_only
    max_leverage: float | None = None  # leverage
    fraction: object = None            # cap_fraction long side
    short_fraction: object = None      # cap_fraction short side (optional)
    w_min: object = None               # position_box: max short fraction (>= 0)
    w_max: object = None               # position_box: max long fraction (>= 0)
    cash_floor: float | None = None    # min_cash, in dollars
    assets: tuple = ()                 # no_hold / no_buy / no_sell / no_trade
    factors: object = None             # factor_neutral: indices or None for all
    min_return: float | None = None    # stress
    periods: int | None = None         # liquidation_loss T^liq
    loss_fraction: float | None = None # liquidation_loss delta
    k: float | None = None             # concentration
    max_fraction: float | None = None  # concentration omega
    max_turnover: float | None = None  # turnover_limit delta
    participation: float | None = None # volume_participation delta

    def __post_init__(self):
        if self.kind not in HOLDING_KINDS + TRADING_KINDS:
            raise SpecError(f"unknown constraint kind {self.kind!r}")
        if self.target not in ("absolute", "active"):
            raise SpecError("target must be 'absolute' or 'active'")
        if self.kind == "leverage" and (self.max_leverage is None or self.max_leverage <= 0):
            raise SpecError("leverage needs max_leverage > 0")
        if self.kind == "cap_fraction" and self.fraction is None:
            raise SpecError("cap_fraction needs a fraction")
        if self.kind == "position_box" and (self.w_min is None or self.w_max is None):
            raise SpecError("position_box needs w_min and w_max")
        if self.kind == "min_cash" and self.cash_floor is None:
            raise SpecError("min_cash needs cash_floor")
        if self.kind in ("no_hold", "no_buy", "no_sell", "no_trade"):
            self.assets = tuple(int(i) for i in self.assets)
            if not self.assets:
                raise SpecError(f"{self.kind} needs at least one asset index")
        if self.kind == "stress" and self.min_return is None:
            raise SpecError("stress needs min_return")
        if self.kind == "liquidation_loss":
            if self.periods is None or self.periods < 1:
                raise SpecError("liquidation_loss needs periods >= 1")
            if self.loss_fraction is None or self.loss_fraction < 0:
                raise SpecError("liquidation_loss needs loss_fraction >= 0")
        if self.kind == "concentration":
            if self.k is None or self.k <= 0:
                raise SpecError("concentration needs k > 0")
            if self.max_fraction is None or not 0 < self.max_fraction <= 1:
                raise SpecError("concentration needs max_fraction in (0, 1]")
        if self.kind == "turnover_limit" and (self.max_turnover is None or self.max_turnover < 0):
            raise SpecError("turnover_limit needs max_turnover >= 0")
        if self.kind == "volume_participation" and (self.participation is None
                                                    or self.participation <= 0):
            raise SpecError("volume_participation needs participation > 0")

    @property
    def is_trading(self) -> bool:
        return self.kind in TRADING_KINDS


@dataclass
class ConstraintState:
    """Period data a constraint builder may need; missing pieces raise SpecError."""

    n_assets: int
    v: float = 1.0
    benchmark: np.ndarray | None = None
    covariance: np.ndarray | None = None
    factor_loadings: np.ndarray | None = None
    capitalization: np.ndarray | None = None
    volume_forecast: np.ndarray | None = None
    tcost: TcostParams | None = None
    scenario_returns: np.ndarray | None = None

    def need(self, name: str, kind: str):
        value = getattr(self, name)
        if value is None:
            raise SpecError(f"{kind} constraint needs state.{name}")
        return value


def _holding_expr(spec: ConstraintSpec, post_trade: Affine, state: ConstraintState) -> Affine:
    if spec.target == "absolute":
        return post_trade
    wb = state.need("benchmark", spec.kind)
    shift = np.zeros(len(wb))
    shift[-1] = 1.0
    return post_trade - wb + shift


def build_holding_constraint(spec: ConstraintSpec, post_trade: Affine,
                             state: ConstraintState) -> list:
    """Constraints on the estimated post-trade weights w + z."""
    if spec.kind not in HOLDING_KINDS:
        raise SpecError(f"{spec.kind} is not a holding constraint")
    n = state.n_assets
    x = _holding_expr(spec, post_trade, state)
    assets = x[:n]

    if spec.kind == "long_only":
        return [LeqZero(-(x if spec.include_cash else assets))]
    if spec.kind == "leverage":
        return [NormOneLeq(assets, constant([spec.max_leverage]))]
    if spec.kind == "cap_fraction":
        cap = state.need("capitalization", spec.kind)
        frac = np.broadcast_to(np.asarray(spec.fraction, dtype=float), (n,))
        out = [LeqZero(assets - frac * cap / state.v)]
        if spec.short_fraction is not None:
            sfrac = np.broadcast_to(np.asarray(spec.short_fraction, dtype=float), (n,))
            out.append(LeqZero(-assets - sfrac * cap / state.v))
        return out
    if spec.kind == "position_box":
        w_min = np.broadcast_to(np.asarray(spec.w_min, dtype=float), (x.rows,))
        w_max = np.broadcast_to(np.asarray(spec.w_max, dtype=float), (x.rows,))
        if np.any(w_min < 0) or np.any(w_max < 0):
            raise SpecError("position box fractions must be nonnegative")
        return [LeqZero(x - w_max), LeqZero(-x - w_min)]
    if spec.kind == "min_cash":
        return [LeqZero(spec.cash_floor / state.v - x[n])]
    if spec.kind == "no_hold":
        return [EqZero(x[np.asarray(spec.assets)])]
    if spec.kind == "beta_neutral":
        sigma = state.need("covariance", spec.kind)
        wb = state.need("benchmark", spec.kind)
        return [EqZero(x.matmul((sigma @ wb)[None, :]))]
    if spec.kind == "factor_neutral":
        F = state.need("factor_loadings", spec.kind)
        cols = np.arange(F.shape[1]) if spec.factors is None else np.asarray(spec.factors)
        return [EqZero(x.matmul(F[:, cols].T))]
    if spec.kind == "stress":
        C = np.atleast_2d(state.need("scenario_returns", spec.kind))
        return [LeqZero(spec.min_return - x.matmul(C))]
    if spec.kind == "liquidation_loss":
        tp = state.need("tcost", spec.kind)
        # T * phi(x/T): the 3/2-power coefficient picks up 1/sqrt(T)
        return [CostBudgetLeq(
            linear=assets.matmul(tp.asymmetry[None, :]),
            abs_parts=((tp.half_spread, assets),),
            power_parts=((tp.impact_coef() / np.sqrt(spec.periods), assets),),
            bound=spec.loss_fraction,
        )]
    # concentration
    return [SumKLargestLeq(assets, spec.k, spec.max_fraction)]


def build_trading_constraint(spec: ConstraintSpec, trades: Affine,
                             state: ConstraintState) -> list:
    """Constraints on the normalized trade vector z."""
    if spec.kind not in TRADING_KINDS:
        raise SpecError(f"{spec.kind} is not a trading constraint")
    n = state.n_assets
    z_assets = trades[:n]
    if spec.kind == "turnover_limit":
        return [NormOneLeq(z_assets, constant([2.0 * spec.max_turnover]))]
    if spec.kind == "volume_participation":
        v_hat = state.need("volume_forecast", spec.kind)
        bound = spec.participation * np.asarray(v_hat, dtype=float) / state.v
        return [AbsLeq(z_assets, constant(bound))]
    idx = np.asarray(spec.assets)
    if spec.kind == "no_buy":
        return [LeqZero(trades[idx])]
    if spec.kind == "no_sell":
        return [LeqZero(-trades[idx])]
    return [EqZero(trades[idx])]


def build_constraint(spec: ConstraintSpec, post_trade: Affine, trades: Affine,
                     state: ConstraintState) -> list:
    if spec.is_trading:
        return build_trading_constraint(spec, trades, state)
    return build_holding_constraint(spec, post_trade, state)


def soften(constraint, priority) -> SoftConstraintTerm:
    """Convert a hard constraint to a penalty term with the given priority."""
    return SoftConstraintTerm(constraint, priority)


def violations(specs, w_plus: np.ndarray, z: np.ndarray, state: ConstraintState,
               tol: float = 1e-7, skip_unevaluable: bool = False) -> list:
    """Evaluate constraint specs on concrete weights/trades.

    Returns (spec index, kind, amount) for each violated constraint; used by
    the simulator to log realized post-trade weights that drift past the
    estimated ones. With ``skip_unevaluable`` constraints whose state data is
    absent are skipped instead of raising.
    """
    out = []
    for i, spec in enumerate(specs):
        try:
            cons = build_constraint(spec, constant(w_plus), constant(z), state)
        except SpecError:
            if skip_unevaluable:
                continue
            raise
        worst = max(c.violation({}) for c in cons)
        if worst > tol:
            out.append((i, spec.kind, worst))
    return out
