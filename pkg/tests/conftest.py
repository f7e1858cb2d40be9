import numpy as np
import pytest

from cvxtrade.costs import HcostParams, TcostCoefficients
from cvxtrade.market_data import ForecastSet, MarketTimeline
from cvxtrade.policies import MarketView, PolicySpec, SpoPolicy
from cvxtrade.constraints import ConstraintSpec
from cvxtrade.risk import RiskSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_timeline():
    """2 assets x 3 dates with hand-picked values."""
    return MarketTimeline(
        periods=["2012-01-02", "2012-01-03", "2012-01-04"],
        assets=["AAA", "BBB"],
        returns=np.array([[0.01, -0.02, 1e-4],
                          [0.005, 0.015, 1e-4],
                          [-0.01, 0.0, 1e-4]]),
        volumes=np.array([[1e6, 2e6], [1.1e6, 2.2e6], [0.9e6, 2.1e6]]),
        volatilities=np.array([[0.01, 0.02], [0.012, 0.018], [0.011, 0.019]]),
    )


def view_for_instance(inst, t_index=0):
    """MarketView matching an oracles.SpoInstance."""
    n = inst.n
    v = 1e8
    fc = ForecastSet(
        t_index=t_index, t_label="2012-01-02", horizon=1,
        r_hat=inst.r[None, :],
        v_hat=(inst.vol_norm * v)[None, :],
        sigma_hat=inst.sig_t[None, :],
    )
    return MarketView(
        t_index=t_index, label="2012-01-02", prev_label=None, n_assets=n, v=v,
        benchmark=np.concatenate([np.zeros(n), [1.0]]),
        forecasts=fc,
        covariance=inst.sigma,
        tcost_coef=TcostCoefficients.build(n, half_spread=inst.a, impact=inst.b,
                                           asymmetry=inst.c),
        hcost=HcostParams.build(n, borrow_fee=inst.s),
    )


def policy_for_instance(inst, **overrides):
    cons = [ConstraintSpec(kind="long_only")] if inst.long_only else []
    if inst.leverage is not None:
        cons.append(ConstraintSpec(kind="leverage", max_leverage=inst.leverage))
    kwargs = dict(
        kind="spo",
        gamma_risk=inst.gamma_risk,
        gamma_trade=inst.gamma_trade,
        gamma_hold=inst.gamma_hold,
        risk=(RiskSpec(kind="quadratic_dense", sigma=inst.sigma),),
        constraints=tuple(cons),
    )
    kwargs.update(overrides)
    return SpoPolicy(PolicySpec(**kwargs))


def solve_instance(inst, **overrides):
    """Solve an oracle instance through the real policy path."""
    policy = policy_for_instance(inst, **overrides)
    view = view_for_instance(inst)
    plan = policy.decide(inst.w, view)
    assert plan.fallback is None, plan.fallback
    return plan
