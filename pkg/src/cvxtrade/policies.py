"""Trading policies: hold, periodic rebalance, SPO, MPO, multi-scale MPO,
and the two nonconvex post-processing heuristics.

A policy maps the current weights and a :class:`MarketView` (everything it is
allowed to see at period t) to a :class:`TradePlan`. Optimization policies
solve the risk-adjusted-return problem; an infeasible or failed solve falls
back to zero trades with a logged event, never a crash mid-back-test.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .costs import HcostParams, TcostCoefficients, TcostParams
from .constraints import ConstraintSpec, ConstraintState, build_constraint, soften
from .errors import SpecError
from .market_data import FactorRiskModel, ForecastSet
from .risk import RiskSpec, build_risk_term, cash_benchmark
from .solver import (
    Affine,
    CostBudgetLeq,
    EqZero,
    LeqZero,
    LinearTerm,
    PowerTerm,
    AbsTerm,
    HingeTerm,
    QuadTerm,
    Var,
    canonicalize,
    constant,
    solve,
    var_expr,
)

logger = logging.getLogger(__name__)

POLICY_KINDS = ("hold", "periodic_rebalance", "spo", "mpo", "multiscale_mpo")
SCHEDULES = ("daily", "weekly", "monthly", "quarterly", "annually", "never")


@dataclass
class PolicySpec:
    """Declarative policy description; fully expressible in the config file."""

    kind: str
    gamma_risk: object = 1.0
    gamma_trade: object = 1.0
    gamma_hold: object = 1.0
    risk: tuple = ()
    constraints: tuple = ()
    soft_constraints: tuple = ()       # (ConstraintSpec, priority) pairs
    horizon: int = 1
    terminal: object = None            # None | 'cash' | 'benchmark' | array
    t_med: int | None = None
    t_long: int | None = None
    min_trade_eps: float | None = None
    max_k_trades: int | None = None
    self_financing: str = "simplified"
    framing: str = "excess"            # reporting label; the optimizer is identical
    rebalance_target: object = "benchmark"
    rebalance_schedule: str = "daily"
    solver_tol: float = 1e-8

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise SpecError(f"unknown policy kind {self.kind!r}")
        if self.horizon < 1:
            raise SpecError("horizon must be >= 1")
        if self.kind == "multiscale_mpo":
            if self.t_med is None or self.t_long is None:
                raise SpecError("multiscale_mpo needs t_med and t_long")
            if not (1 < self.t_med < self.t_long < self.horizon - 1):
                raise SpecError("need 1 < t_med < t_long < horizon - 1")
        if self.self_financing not in ("simplified", "exact"):
            raise SpecError("self_financing must be 'simplified' or 'exact'")
        if self.framing not in ("absolute", "excess", "active"):
            raise SpecError("framing must be absolute, excess, or active")
        if self.rebalance_schedule not in SCHEDULES:
            raise SpecError(f"unknown schedule {self.rebalance_schedule!r}")
        for g in (self.gamma_risk, self.gamma_trade, self.gamma_hold):
            if isinstance(g, (int, float)) and g < 0:
                raise SpecError("gamma multipliers must be >= 0")
        self.risk = tuple(self.risk)
        self.constraints = tuple(self.constraints)
        self.soft_constraints = tuple(self.soft_constraints)


def gamma_at(gamma, t_index: int) -> float:
    """Resolve a constant, per-period sequence, or callable schedule."""
    if callable(gamma):
        value = float(gamma(t_index))
    elif isinstance(gamma, (list, tuple, np.ndarray)):
        value = float(np.asarray(gamma, dtype=float)[t_index])
    else:
        value = float(gamma)
    if value < 0:
        raise SpecError("gamma schedule produced a negative value")
    return value


@dataclass
class MarketView:
    """Data available to the policy at the start of period t."""

    t_index: int
    label: str
    prev_label: str | None
    n_assets: int
    v: float
    benchmark: np.ndarray
    forecasts: ForecastSet | None = None
    risk_model: FactorRiskModel | None = None
    covariance: np.ndarray | None = None
    tcost_coef: TcostCoefficients | None = None
    hcost: HcostParams | None = None
    capitalization: np.ndarray | None = None
    scenario_returns: np.ndarray | None = None


@dataclass
class FallbackEvent:
    t_index: int
    label: str
    reason: str
    status: str


@dataclass
class TradePlan:
    """Requested trades for the current period plus the planning context."""

    z: np.ndarray                      # (n+1,) normalized, estimated cash entry
    planned_trades: np.ndarray | None = None   # (H, n+1) including the first
    planned_weights: np.ndarray | None = None  # (H, n+1) post-trade each period
    diagnostics: dict = field(default_factory=dict)
    fallback: FallbackEvent | None = None


def _zero_plan(n_assets: int, diagnostics=None, fallback=None) -> TradePlan:
    return TradePlan(z=np.zeros(n_assets + 1), diagnostics=diagnostics or {},
                     fallback=fallback)


class HoldPolicy:
    """Buy-and-hold: never trades."""

    def decide(self, w: np.ndarray, view: MarketView) -> TradePlan:
        return _zero_plan(view.n_assets, {"policy": "hold"})


def _boundary_crossed(prev_label: str | None, label: str, schedule: str) -> bool:
    if schedule == "never":
        return False
    if schedule == "daily" or prev_label is None:
        return True
    import datetime

    prev = datetime.date.fromisoformat(prev_label)
    cur = datetime.date.fromisoformat(label)
    if schedule == "weekly":
        return prev.isocalendar()[:2] != cur.isocalendar()[:2]
    if schedule == "monthly":
        return (prev.year, prev.month) != (cur.year, cur.month)
    if schedule == "quarterly":
        return (prev.year, (prev.month - 1) // 3) != (cur.year, (cur.month - 1) // 3)
    return prev.year != cur.year


class PeriodicRebalancePolicy:
    """Trade to target weights on schedule dates, hold otherwise."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec

    def decide(self, w: np.ndarray, view: MarketView) -> TradePlan:
        target = self.spec.rebalance_target
        if isinstance(target, str):
            if target == "benchmark":
                target = view.benchmark
            elif target == "cash":
                target = cash_benchmark(view.n_assets)
            else:
                raise SpecError(f"unknown rebalance target {target!r}")
        target = np.asarray(target, dtype=float)
        if abs(target.sum() - 1.0) > 1e-9:
            raise SpecError("rebalance target must sum to one")
        if _boundary_crossed(view.prev_label, view.label, self.spec.rebalance_schedule):
            z = target - w
        else:
            z = np.zeros_like(w)
        return TradePlan(z=z, diagnostics={"policy": "periodic_rebalance"})


# ---------------------------------------------------------------------------
# Optimization policies
# ---------------------------------------------------------------------------

def _resolve_risk(template: RiskSpec, view: MarketView, gamma_risk: float) -> RiskSpec:
    changes = {"gamma": template.gamma * gamma_risk}
    if template.benchmark is None:
        changes["benchmark"] = view.benchmark
    needs_sigma = template.kind in ("quadratic_dense", "transformed",
                                    "covariance_forecast_error")
    if needs_sigma and template.sigma is None:
        if view.covariance is not None:
            changes["sigma"] = view.covariance
        elif view.risk_model is not None:
            changes["sigma"] = view.risk_model.dense()
        else:
            raise SpecError(f"{template.kind} risk needs a covariance in the view")
    if template.kind == "quadratic_factor" and template.factor_model is None:
        if view.risk_model is None:
            raise SpecError("quadratic_factor risk needs view.risk_model")
        changes["factor_model"] = view.risk_model
    return replace(template, **changes)


def _tcost_terms(z_assets: Affine, params: TcostParams, gamma_trade: float) -> list:
    terms = []
    if gamma_trade == 0.0:
        return terms
    if np.any(params.half_spread > 0):
        terms.append(AbsTerm(gamma_trade * params.half_spread, z_assets))
    coef = params.impact_coef()
    if np.any(coef > 0):
        terms.append(PowerTerm(gamma_trade * coef, z_assets))
    if np.any(params.asymmetry != 0):
        terms.append(LinearTerm(z_assets.matmul(gamma_trade * params.asymmetry[None, :])))
    if params.quad is not None and np.any(params.quad > 0):
        terms.append(QuadTerm(gamma_trade, z_assets, np.diag(params.quad)))
    for slope, kink in params.spread_tiers:
        w = gamma_trade * slope
        terms.append(HingeTerm(w, z_assets - kink))
        terms.append(HingeTerm(w, -z_assets - kink))
    return terms


def _hcost_terms(post: Affine, n: int, params: HcostParams, gamma_hold: float) -> list:
    terms = []
    if gamma_hold == 0.0 or params is None:
        return terms
    m = params.multiplier
    assets = post[:n]
    if np.any(params.borrow_fee > 0):
        terms.append(HingeTerm(gamma_hold * m * params.borrow_fee, -assets))
    lin = params.fund_fee - params.dividend
    if np.any(lin != 0):
        terms.append(LinearTerm(assets.matmul(gamma_hold * m * lin[None, :])))
    if params.cash_borrow > 0:
        terms.append(HingeTerm(np.array([gamma_hold * m * params.cash_borrow]), -post[n]))
    return terms


def _self_financing(z: Affine, post: Affine, n: int, tp: TcostParams,
                    hp: HcostParams | None, mode: str):
    """The per-period budget row: simplified 1'z = 0 or the exact relaxation."""
    if mode == "simplified":
        return EqZero(z.sum())
    z_assets = z[:n]
    linear = z.sum()
    if np.any(tp.asymmetry != 0):
        linear = linear + z_assets.matmul(tp.asymmetry[None, :])
    hinge_parts = []
    if hp is not None:
        m = hp.multiplier
        lin_h = m * (hp.fund_fee - hp.dividend)
        if np.any(lin_h != 0):
            linear = linear + post[:n].matmul(lin_h[None, :])
        if np.any(hp.borrow_fee > 0):
            hinge_parts.append((m * hp.borrow_fee, -post[:n]))
        if hp.cash_borrow > 0:
            hinge_parts.append((np.array([m * hp.cash_borrow]), -post[n]))
    return CostBudgetLeq(
        linear=linear,
        abs_parts=((tp.half_spread, z_assets),) if np.any(tp.half_spread > 0) else (),
        power_parts=((tp.impact_coef(), z_assets),) if np.any(tp.impact_coef() > 0) else (),
        hinge_parts=tuple(hinge_parts),
        bound=0.0,
    )


def _terminal_weights(spec: PolicySpec, view: MarketView):
    term = spec.terminal
    if term is None:
        return None
    if isinstance(term, str):
        if term == "cash":
            return cash_benchmark(view.n_assets)
        if term == "benchmark":
            return view.benchmark
        raise SpecError(f"unknown terminal spec {term!r}")
    term = np.asarray(term, dtype=float)
    if abs(term.sum() - 1.0) > 1e-9:
        raise SpecError("terminal weights must sum to one")
    return term


class _OptimizationPolicy:
    """Shared machinery for SPO/MPO/multi-scale policies."""

    def __init__(self, spec: PolicySpec):
        self.spec = spec

    # -- assembly -----------------------------------------------------------
    def _constraint_state(self, view: MarketView, tp: TcostParams,
                          v_hat_dollar: np.ndarray) -> ConstraintState:
        cov = view.covariance
        if cov is None and view.risk_model is not None:
            needs_cov = any(c.kind == "beta_neutral" for c in self.spec.constraints)
            cov = view.risk_model.dense() if needs_cov else None
        return ConstraintState(
            n_assets=view.n_assets,
            v=view.v,
            benchmark=view.benchmark,
            covariance=cov,
            factor_loadings=None if view.risk_model is None else view.risk_model.loadings,
            capitalization=view.capitalization,
            volume_forecast=v_hat_dollar,
            tcost=tp,
            scenario_returns=view.scenario_returns,
        )

    def _period_cost_params(self, view: MarketView, row: int) -> tuple:
        fc = view.forecasts
        if fc is None:
            raise SpecError("optimization policy needs forecasts in the view")
        row = min(row, fc.horizon - 1)
        if view.tcost_coef is None:
            tp = TcostParams.build(view.n_assets, volume=1.0)
        else:
            tp = view.tcost_coef.at(fc.sigma_hat[row], fc.v_hat[row] / view.v)
        return tp, fc.r_hat[min(row, fc.r_hat.shape[0] - 1)], fc.v_hat[row]

    def _period_terms_cons(self, view: MarketView, t_sched: int, z: Affine, post: Affine,
                           row: int, count: int = 1, return_on: str = "post"):
        """Objective terms and constraints for one planning period.

        ``count`` scales the held-portfolio terms (return, risk, holding cost)
        when one weight vector is held for several periods (multi-scale).
        ``return_on`` picks r'post (MPO form) or r'z (SPO form); the two
        differ by a constant and share the optimizer.
        """
        spec = self.spec
        n = view.n_assets
        g_risk = gamma_at(spec.gamma_risk, t_sched)
        g_trade = gamma_at(spec.gamma_trade, t_sched)
        g_hold = gamma_at(spec.gamma_hold, t_sched)
        tp, r_hat, v_hat = self._period_cost_params(view, row)

        carrier = post if return_on == "post" else z
        terms = [LinearTerm(carrier.matmul(-count * r_hat[None, :]))]
        terms += _tcost_terms(z[:n], tp, g_trade)
        terms += _hcost_terms(post, n, view.hcost, count * g_hold)
        for template in spec.risk:
            resolved = _resolve_risk(template, view, count * g_risk)
            terms += build_risk_term(resolved, post)

        cons = [_self_financing(z, post, n, tp, view.hcost, spec.self_financing)]
        state = self._constraint_state(view, tp, v_hat)
        for cspec in spec.constraints:
            cons += build_constraint(cspec, post, z, state)
        soft_terms = []
        for cspec, priority in spec.soft_constraints:
            for hard in build_constraint(cspec, post, z, state):
                soft_terms.append(soften(hard, priority))
        return terms + soft_terms, cons

    def assemble(self, w: np.ndarray, view: MarketView, extra_cons=None):
        raise NotImplementedError

    # -- solving with fallback ---------------------------------------------
    def _solve_plan(self, w: np.ndarray, view: MarketView) -> TradePlan:
        spec = self.spec
        try:
            plan = self._solve_once(w, view, extra=None)
        except SpecError:
            raise
        except Exception as exc:  # numerical failure: fall back, keep trading
            logger.warning("solver exception at %s: %s", view.label, exc)
            event = FallbackEvent(view.t_index, view.label, f"exception: {exc}", "error")
            return _zero_plan(view.n_assets, fallback=event)
        if plan.fallback is not None:
            return plan
        if spec.min_trade_eps is not None and spec.min_trade_eps > 0:
            plan = restrict_min_trade(self, w, view, plan, spec.min_trade_eps)
        if spec.max_k_trades is not None:
            plan = restrict_k_trades(self, w, view, plan, spec.max_k_trades)
        return plan

    def _solve_once(self, w: np.ndarray, view: MarketView, extra=None) -> TradePlan:
        terms, cons, z_vars, post_exprs = self.assemble(w, view, extra_cons=extra)
        problem = canonicalize(terms, cons)
        sol = solve(problem, tol=self.spec.solver_tol)
        if sol.status != "optimal":
            reason = "infeasible problem" if sol.status == "infeasible" else "solver failure"
            logger.warning("policy fallback at %s: %s (%s)", view.label, reason,
                           sol.raw_status)
            event = FallbackEvent(view.t_index, view.label, reason, sol.status)
            return _zero_plan(view.n_assets, fallback=event)
        assign = problem.split(sol.x)
        planned = np.stack([ze.value(assign) for ze in z_vars])
        weights = np.stack([pe.value(assign) for pe in post_exprs])
        residual = 0.0
        for con in cons:
            residual = max(residual, con.violation(assign))
        diagnostics = {
            "policy": self.spec.kind,
            "status": sol.status,
            "objective": -sol.objective,  # back to the maximize convention
            "gap_rel": sol.gap_rel,
            "iterations": sol.iterations,
            "solve_time": sol.solve_time,
            "constraint_residual": residual,
            "estimated_cash_trade": float(planned[0, -1]),
        }
        return TradePlan(z=planned[0], planned_trades=planned, planned_weights=weights,
                         diagnostics=diagnostics)

    def decide(self, w: np.ndarray, view: MarketView) -> TradePlan:
        return self._solve_plan(w, view)


class SpoPolicy(_OptimizationPolicy):
    """Single-period optimization: maximize risk-adjusted one-period return."""

    def assemble(self, w, view, extra_cons=None):
        n = view.n_assets
        z = Var("z", n + 1)
        ze = var_expr(z)
        post = ze + w
        # r'z only: the r'w constant does not move z*.
        terms, cons = self._period_terms_cons(view, view.t_index, ze, post, row=0,
                                              return_on="trades")
        if extra_cons:
            cons = cons + list(extra_cons(ze))
        return terms, cons, [ze], [post]


class MpoPolicy(_OptimizationPolicy):
    """Multi-period optimization over an H-period planning horizon.

    Simplified planning dynamics w_{tau+1} = w_tau + z_tau with per-period
    1'z = 0; only the first trade is executed. With H=1 this reduces to the
    single-period problem.
    """

    def assemble(self, w, view, extra_cons=None):
        spec = self.spec
        n = view.n_assets
        fc = view.forecasts
        if fc is None:
            raise SpecError("MPO needs forecasts")
        H = min(spec.horizon, fc.horizon)
        terms, cons, z_exprs, post_exprs = [], [], [], []
        current = constant(w)
        for tau in range(H):
            z = Var(f"z{tau}", n + 1)
            ze = var_expr(z)
            post = current + ze
            t_terms, t_cons = self._period_terms_cons(
                view, view.t_index + tau, ze, post, row=tau)
            terms += t_terms
            cons += t_cons
            z_exprs.append(ze)
            post_exprs.append(post)
            current = post
        w_term = _terminal_weights(spec, view)
        if w_term is not None:
            cons.append(EqZero(current - w_term))
        if extra_cons:
            cons = cons + list(extra_cons(z_exprs[0]))
        return terms, cons, z_exprs, post_exprs


class MultiScaleMpoPolicy(_OptimizationPolicy):
    """MPO restricted to short/medium/long trades plus the pinned final trade.

    Trades happen only at offsets {0, t_med, t_long, H-1}; between them the
    planned portfolio is held unchanged, so the variables reduce to three
    trade vectors regardless of H. The final trade is determined by the
    terminal constraint, so it is an expression, not a variable.
    """

    def assemble(self, w, view, extra_cons=None):
        spec = self.spec
        n = view.n_assets
        fc = view.forecasts
        if fc is None:
            raise SpecError("multi-scale MPO needs forecasts")
        H, t_med, t_long = spec.horizon, spec.t_med, spec.t_long
        w_term = _terminal_weights(spec, view)
        if w_term is None:
            w_term = view.benchmark
        blocks = [(0, t_med), (t_med, t_long), (t_long, H - 1)]
        terms, cons, z_exprs, post_exprs = [], [], [], []
        current = constant(w)
        for (start, end) in blocks:
            z = Var(f"z_{start}", n + 1)
            ze = var_expr(z)
            post = current + ze
            t_terms, t_cons = self._period_terms_cons(
                view, view.t_index + start, ze, post, row=start, count=end - start)
            terms += t_terms
            cons += t_cons
            z_exprs.append(ze)
            post_exprs.append(post)
            current = post
        # Final trade to the terminal portfolio is pinned (an expression, not
        # a variable); only its transaction cost enters the objective --
        # everything else at the terminal weights is constant.
        z_final = w_term - current
        tp_final, _, _ = self._period_cost_params(view, H - 1)
        terms += _tcost_terms(z_final[:n], tp_final,
                              gamma_at(spec.gamma_trade, view.t_index + H - 1))
        if extra_cons:
            cons = cons + list(extra_cons(z_exprs[0]))
        return terms, cons, z_exprs + [z_final], post_exprs + [constant(w_term)]


# ---------------------------------------------------------------------------
# Nonconvex post-processing heuristics (two-pass convex solves)
# ---------------------------------------------------------------------------

_SIGN_TOL = 1e-8


def restrict_min_trade(policy: _OptimizationPolicy, w: np.ndarray, view: MarketView,
                       plan: TradePlan, eps: float) -> TradePlan:
    """Enforce |z_i| in {0} union [eps, inf) by freezing the first-pass signs.

    Zero-signed assets are pinned to zero; positive (negative) assets get a
    sign constraint plus the now-linear minimum-trade bound. If the second
    pass is infeasible the eps bounds are dropped asset by asset, largest
    first, with a log line.
    """
    if eps == 0.0:
        return plan
    n = view.n_assets
    z1 = plan.z[:n]
    zero = np.abs(z1) < _SIGN_TOL
    pos = (z1 >= _SIGN_TOL)
    neg = (z1 <= -_SIGN_TOL)
    eps_assets = list(np.nonzero(pos | neg)[0])
    eps_assets.sort(key=lambda i: -abs(z1[i]))
    dropped = 0
    while True:
        eps_set = set(eps_assets[dropped:])

        def extra(ze):
            out = []
            idx0 = np.nonzero(zero)[0]
            if idx0.size:
                out.append(EqZero(ze[idx0]))
            for i in np.nonzero(pos)[0]:
                out.append(LeqZero((eps if i in eps_set else 0.0) - ze[i]))
            for i in np.nonzero(neg)[0]:
                out.append(LeqZero(ze[i] + (eps if i in eps_set else 0.0)))
            return out

        second = policy._solve_once(w, view, extra=extra)
        if second.fallback is None:
            second.diagnostics["heuristic"] = "min_trade"
            second.diagnostics["min_trade_dropped"] = dropped
            # snap solver-tolerance residue so |z_i| lies in {0} U [eps, inf)
            # exactly; the cash entry absorbs the (tiny) adjustments
            z = second.z.copy()
            z[-1] += z[:n][zero].sum()
            z[:n][zero] = 0.0
            for i in np.nonzero(pos)[0]:
                if i in eps_set and 0 < z[i] < eps:
                    z[-1] -= eps - z[i]
                    z[i] = eps
            for i in np.nonzero(neg)[0]:
                if i in eps_set and -eps < z[i] < 0:
                    z[-1] += -eps - z[i]
                    z[i] = -eps
            second.z = z
            return second
        if dropped >= len(eps_assets):
            logger.warning("min-trade heuristic found no feasible sign pattern at %s",
                           view.label)
            return plan
        dropped += 1
        logger.warning("min-trade heuristic dropped eps bound %d/%d at %s",
                       dropped, len(eps_assets), view.label)


def restrict_k_trades(policy: _OptimizationPolicy, w: np.ndarray, view: MarketView,
                      plan: TradePlan, k: int) -> TradePlan:
    """Allow at most k nonzero asset trades: keep the k largest, pin the rest."""
    if k < 1:
        raise SpecError("max_k_trades must be >= 1")
    n = view.n_assets
    if k >= n:
        return plan
    z1 = plan.z[:n]
    order = np.lexsort((np.arange(n), -np.abs(z1)))
    keep = np.sort(order[:k])
    pin = np.setdiff1d(np.arange(n), keep)

    def extra(ze):
        return [EqZero(ze[pin])] if pin.size else []

    second = policy._solve_once(w, view, extra=extra)
    if second.fallback is not None:
        return plan
    z = second.z.copy()
    z[-1] = z[-1] + z[pin].sum()
    z[pin] = 0.0
    second.z = z
    second.diagnostics["heuristic"] = "k_trades"
    second.diagnostics["k_kept"] = keep.tolist()
    return second


def make_policy(spec: PolicySpec):
    """Instantiate the policy class for a spec."""
    if spec.kind == "hold":
        return HoldPolicy()
    if spec.kind == "periodic_rebalance":
        return PeriodicRebalancePolicy(spec)
    if spec.kind == "spo":
        return SpoPolicy(spec)
    if spec.kind == "mpo":
        return MpoPolicy(spec)
    return MultiScaleMpoPolicy(spec)
