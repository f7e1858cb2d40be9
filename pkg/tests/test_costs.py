import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxtrade.costs import (
    HcostParams,
    TcostCoefficients,
    TcostParams,
    hcost,
    realize_cash_trade,
    tcost,
)
from cvxtrade.errors import DomainError, SpecError

from oracles import hcost_direct, tcost_direct


def params_1asset(a=0.0005, b=1.0, sigma=0.02, volume=10.0, c=0.0):
    return TcostParams.build(1, half_spread=a, impact=b, sigma=sigma,
                             volume=volume, asymmetry=c)


class TestTcost:
    def test_zero_trade_zero_cost(self, rng):
        p = TcostParams.build(4, half_spread=0.001, impact=1.0, sigma=0.02,
                              volume=rng.uniform(1, 5, 4), asymmetry=0.0002)
        assert tcost(np.zeros(4), p) == 0.0

    def test_single_asset_derived_value(self):
        # a|z| + b sigma |z|^1.5 / sqrt(V/v): 5e-6 + 0.02*0.001/sqrt(10)
        p = params_1asset()
        value = tcost(np.array([0.01]), p)
        expected = 5e-6 + 0.02 * 0.001 / np.sqrt(10.0)
        assert np.isclose(value, expected, rtol=1e-12)
        assert np.isclose(value, 1.132455532033676e-05)

    def test_asymmetry_sell_cheaper_and_negative(self):
        a = 0.0005
        p_sell_bias = params_1asset(a=a, b=0.0, c=-2 * a)
        buy = tcost(np.array([0.01]), p_sell_bias)
        sell = tcost(np.array([-0.01]), p_sell_bias)
        assert sell < buy
        # |c| > |a| makes selling revenue-positive (negative cost)
        assert sell < 0

    def test_separability(self, rng):
        p = TcostParams.build(5, half_spread=rng.uniform(0, 1e-3, 5),
                              impact=rng.uniform(0, 2, 5),
                              sigma=rng.uniform(0.005, 0.03, 5),
                              volume=rng.uniform(0.5, 20, 5),
                              asymmetry=rng.normal(0, 1e-4, 5))
        x = rng.normal(0, 0.02, 5)
        total = tcost(x, p)
        split = 0.0
        for i in range(5):
            xi = np.zeros(5)
            xi[i] = x[i]
            split += tcost(xi, p)
        assert np.isclose(total, split, rtol=1e-12)

    def test_matches_direct_oracle(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 6))
            a = rng.uniform(0, 1e-3, n)
            b = rng.uniform(0, 2, n)
            sig = rng.uniform(0.005, 0.03, n)
            vol = rng.uniform(0.5, 20, n)
            c = rng.normal(0, 1e-4, n)
            x = rng.normal(0, 0.05, n)
            p = TcostParams.build(n, half_spread=a, impact=b, sigma=sig,
                                  volume=vol, asymmetry=c)
            assert np.isclose(tcost(x, p), tcost_direct(x, a, b, sig, vol, c),
                              rtol=1e-12)

    def test_normalization_equivalence(self, rng):
        # dollar cost / v == normalized cost of z = u/v with volume V/v
        for _ in range(200):
            n = int(rng.integers(1, 5))
            v = float(rng.uniform(1e6, 1e10))
            a = rng.uniform(0, 1e-3, n)
            b = rng.uniform(0, 2, n)
            sig = rng.uniform(0.005, 0.03, n)
            V = rng.uniform(1e5, 1e9, n)
            c = rng.normal(0, 1e-4, n)
            u = rng.normal(0, 0.02, n) * v
            dollar = TcostParams.build(n, half_spread=a, impact=b, sigma=sig,
                                       volume=V, asymmetry=c)
            norm = TcostParams.build(n, half_spread=a, impact=b, sigma=sig,
                                     volume=V / v, asymmetry=c)
            assert np.isclose(tcost(u, dollar) / v, tcost(u / v, norm), rtol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(x=st.floats(-0.5, 0.5), y=st.floats(-0.5, 0.5))
    def test_midpoint_convexity(self, x, y):
        p = params_1asset(c=0.0003)
        fx = tcost(np.array([x]), p)
        fy = tcost(np.array([y]), p)
        fm = tcost(np.array([(x + y) / 2]), p)
        assert fm <= (fx + fy) / 2 + 1e-12

    def test_nonpositive_volume_rejected(self):
        p = params_1asset(volume=0.0)
        with pytest.raises(DomainError):
            tcost(np.array([0.01]), p)

    def test_quadratic_extra_term(self):
        p = TcostParams.build(1, quad=2.0, volume=1.0)
        assert np.isclose(tcost(np.array([0.1]), p), 2.0 * 0.01)

    def test_spread_tiers(self):
        p = TcostParams.build(1, half_spread=0.001, volume=1.0,
                              spread_tiers=[(0.01, 0.05)])
        inside = tcost(np.array([0.04]), p)
        assert np.isclose(inside, 0.001 * 0.04)
        outside = tcost(np.array([0.08]), p)
        assert np.isclose(outside, 0.001 * 0.08 + 0.01 * 0.03)

    def test_negative_coefficients_rejected(self):
        with pytest.raises(SpecError):
            TcostParams.build(2, half_spread=-0.001, volume=1.0)


class TestHcost:
    def test_long_only_no_fees_zero(self):
        p = HcostParams.build(3, borrow_fee=0.001)
        assert hcost(np.array([0.3, 0.3, 0.4, 0.0]), p) == 0.0

    def test_short_position_derived(self):
        p = HcostParams.build(2, borrow_fee=0.001)
        value = hcost(np.array([0.5, -0.2, 0.7]), p)
        assert np.isclose(value, 0.001 * 0.2, rtol=1e-12)
        assert np.isclose(value, 2e-4)

    def test_one_basis_point_default_scale(self):
        p = HcostParams.build(1, borrow_fee=0.0001)
        assert np.isclose(hcost(np.array([-1.0, 2.0]), p), 0.0001)

    def test_fees_and_dividends(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 5))
            s = rng.uniform(0, 1e-3, n)
            f = rng.uniform(0, 1e-4, n)
            d = rng.uniform(0, 1e-4, n)
            w = rng.normal(0, 0.5, n)
            p = HcostParams.build(n, borrow_fee=s, fund_fee=f, dividend=d)
            assert np.isclose(hcost(w, p), hcost_direct(w, s, f, d), rtol=1e-12)

    def test_multiplier(self):
        p = HcostParams.build(1, borrow_fee=0.001, multiplier=3.0)
        assert np.isclose(hcost(np.array([-0.5, 1.5]), p), 3.0 * 0.001 * 0.5)

    def test_benchmark_zero_cost(self, rng):
        # nonnegative benchmark weights with zero fees incur no holding cost
        p = HcostParams.build(4, borrow_fee=rng.uniform(0, 1e-3, 4))
        wb = rng.dirichlet(np.ones(5))
        assert hcost(wb, p) == 0.0


class TestRealizeCashTrade:
    def test_no_trade_no_cost(self):
        tp = TcostParams.build(2, volume=1.0)
        hp = HcostParams.build(2)
        w = np.array([0.6, 0.4, 0.0])
        assert realize_cash_trade(np.zeros(2), w, tp, hp) == 0.0

    def test_derived_value(self):
        # 1'z = 0.02, tcost = 1e-4, hcost = 5e-5 -> z_cash = -0.02015
        n = 2
        z = np.array([0.01, 0.01])
        # pick half_spread so tcost = 1e-4: a * (0.02) = 1e-4
        tp = TcostParams.build(n, half_spread=0.005, volume=1.0)
        assert np.isclose(tcost(z, tp), 1e-4)
        # short 0.05 with s = 1e-3 -> hcost 5e-5
        w = np.array([0.5, -0.06, 0.56])
        hp = HcostParams.build(n, borrow_fee=1e-3)
        w_plus = w[:2] + z
        assert np.isclose(hcost(w_plus, hp), 5e-5)
        z_cash = realize_cash_trade(z, w, tp, hp)
        assert np.isclose(z_cash, -0.02015, rtol=1e-12)

    def test_self_financing_identity(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 6))
            tp = TcostParams.build(n, half_spread=rng.uniform(0, 1e-3, n),
                                   impact=rng.uniform(0, 2, n),
                                   sigma=rng.uniform(0.005, 0.03, n),
                                   volume=rng.uniform(0.5, 20, n),
                                   asymmetry=rng.normal(0, 1e-4, n))
            hp = HcostParams.build(n, borrow_fee=rng.uniform(0, 1e-3, n),
                                   fund_fee=rng.uniform(0, 1e-4, n))
            w_assets = rng.normal(0.2, 0.3, n)
            w = np.concatenate([w_assets, [1.0 - w_assets.sum()]])
            z = rng.normal(0, 0.02, n)
            z_cash = realize_cash_trade(z, w, tp, hp)
            residual = z.sum() + z_cash + tcost(z, tp) + hcost(w[:n] + z, hp)
            assert abs(residual) <= 1e-14 * max(1.0, abs(z_cash))

    def test_cash_borrow_branches(self):
        tp = TcostParams.build(1, volume=1.0)
        hp = HcostParams.build(1, cash_borrow=0.01)
        w = np.array([0.9, 0.1])
        # stays positive: plain branch
        z_cash = realize_cash_trade(np.array([0.05]), w, tp, hp)
        assert np.isclose(z_cash, -0.05)
        # goes negative: premium charged on the realized post-trade cash
        z_cash2 = realize_cash_trade(np.array([0.5]), w, tp, hp)
        post_cash = w[-1] + z_cash2
        assert post_cash < 0
        residual = 0.5 + z_cash2 + hp.cash_borrow * max(-post_cash, 0.0)
        assert abs(residual) < 1e-14

    def test_external_cash(self):
        tp = TcostParams.build(1, volume=1.0)
        hp = HcostParams.build(1)
        w = np.array([0.5, 0.5])
        z_cash = realize_cash_trade(np.array([0.0]), w, tp, hp, external=0.01)
        assert np.isclose(z_cash, 0.01)


class TestCoefficients:
    def test_at_combines_period_data(self):
        coef = TcostCoefficients.build(2, half_spread=0.0005, impact=1.0)
        p = coef.at(sigma=[0.01, 0.02], volume=[5.0, 10.0])
        assert np.allclose(p.impact_coef(), [0.01 / np.sqrt(5.0), 0.02 / np.sqrt(10.0)])
