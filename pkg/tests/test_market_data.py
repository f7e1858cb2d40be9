import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxtrade.errors import DomainError, HistoryError, IngestError, SpecError
from cvxtrade.market_data import (
    ForecastProvider,
    MarketTimeline,
    MonthlyRiskModels,
    estimate_factor_risk,
    estimate_volatility,
    export_csv,
    forecast_alpha,
    forecast_moving_average,
    ingest_csv,
    load_cache,
    perturb,
    save_cache,
    synth_return_forecast,
    synthetic_timeline,
)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) for x in row) + "\n")
    return path


@pytest.fixture
def csv_fixture(tmp_path):
    """2 assets x 3 dates, all series present."""
    dates = ["2012-01-02", "2012-01-03", "2012-01-04"]
    assets = ["AAA", "BBB"]
    rows_r, rows_v, rows_p = [], [], []
    for i, d in enumerate(dates):
        for j, a in enumerate(assets):
            rows_r.append((d, a, 0.01 * (i + 1) * (1 if j == 0 else -1)))
            rows_v.append((d, a, 1e6 * (j + 1) + i))
            rows_p.append((d, a, 100.0 + i, 101.0 + i))
    paths = {
        "returns": write_csv(tmp_path / "returns.csv", ("date", "asset", "return"), rows_r),
        "volumes": write_csv(tmp_path / "volumes.csv", ("date", "asset", "dollar_volume"),
                             rows_v),
        "prices": write_csv(tmp_path / "prices.csv", ("date", "asset", "open", "close"),
                            rows_p),
        "cash": write_csv(tmp_path / "cash.csv", ("date", "rate"),
                          [(d, 1e-4) for d in dates]),
    }
    return paths


class TestIngest:
    def test_identity_ingestion(self, csv_fixture):
        tl = ingest_csv(csv_fixture["returns"], csv_fixture["volumes"],
                        csv_fixture["cash"], csv_fixture["prices"])
        assert tl.n_periods == 3
        assert tl.n_assets == 2
        assert tl.assets == ("AAA", "BBB")
        assert tl.returns.shape == (3, 3)
        assert np.all(tl.returns[:, -1] == 1e-4)

    def test_missing_cell_is_error(self, tmp_path, csv_fixture):
        lines = open(csv_fixture["volumes"]).read().strip().splitlines()
        write_path = tmp_path / "volumes_missing.csv"
        with open(write_path, "w") as fh:
            fh.write("\n".join(lines[:-1]) + "\n")  # drop 2012-01-04/BBB
        with pytest.raises(IngestError) as err:
            ingest_csv(csv_fixture["returns"], write_path, csv_fixture["cash"])
        assert "2012-01-04" in str(err.value)
        assert "BBB" in str(err.value)
        assert "volumes" in str(err.value)

    def test_return_below_minus_one_rejected(self, tmp_path, csv_fixture):
        bad = tmp_path / "returns_bad.csv"
        text = open(csv_fixture["returns"]).read().replace("0.01", "-1.5", 1)
        bad.write_text(text)
        with pytest.raises(IngestError):
            ingest_csv(bad, csv_fixture["volumes"], csv_fixture["cash"])

    def test_duplicate_row_rejected(self, tmp_path, csv_fixture):
        dup = tmp_path / "returns_dup.csv"
        lines = open(csv_fixture["returns"]).read().strip().splitlines()
        dup.write_text("\n".join(lines + [lines[1]]) + "\n")
        with pytest.raises(IngestError) as err:
            ingest_csv(dup, csv_fixture["volumes"], csv_fixture["cash"])
        assert "duplicate" in str(err.value)

    def test_non_finite_rejected(self, tmp_path, csv_fixture):
        bad = tmp_path / "returns_nan.csv"
        bad.write_text(open(csv_fixture["returns"]).read().replace("0.01", "nan", 1))
        with pytest.raises(IngestError):
            ingest_csv(bad, csv_fixture["volumes"], csv_fixture["cash"])

    def test_missing_file(self, csv_fixture):
        with pytest.raises(IngestError):
            ingest_csv("/nonexistent/returns.csv", csv_fixture["volumes"],
                       csv_fixture["cash"])

    def test_asset_intersection(self, tmp_path, csv_fixture):
        extra = tmp_path / "returns_extra.csv"
        text = open(csv_fixture["returns"]).read()
        extra.write_text(text + "2012-01-02,CCC,0.0\n2012-01-03,CCC,0.0\n"
                         "2012-01-04,CCC,0.0\n")
        tl = ingest_csv(extra, csv_fixture["volumes"], csv_fixture["cash"])
        assert tl.assets == ("AAA", "BBB")

    def test_round_trip_bit_exact(self, tmp_path, rng):
        tl = synthetic_timeline(3, 7, seed=9)
        paths = export_csv(tl, tmp_path / "rt")
        back = ingest_csv(paths["returns"], paths["volumes"], paths["cash"],
                          paths["prices"])
        assert back.periods == tl.periods
        assert back.assets == tl.assets
        np.testing.assert_array_equal(back.returns, tl.returns)
        np.testing.assert_array_equal(back.volumes, tl.volumes)
        np.testing.assert_array_equal(back.volatilities, tl.volatilities)
        np.testing.assert_array_equal(back.open_prices, tl.open_prices)

    def test_cache_round_trip(self, tmp_path):
        tl = synthetic_timeline(3, 7, seed=9)
        h1 = save_cache(tl, tmp_path / "c")
        back = load_cache(tmp_path / "c")
        np.testing.assert_array_equal(back.returns, tl.returns)
        h2 = save_cache(back, tmp_path / "c2")
        assert h1 == h2


class TestInvariants:
    def test_reserved_cash_asset(self):
        with pytest.raises(IngestError):
            MarketTimeline(periods=["2012-01-02"], assets=["CASH"],
                           returns=np.zeros((1, 2)), volumes=np.ones((1, 1)))

    def test_negative_volume_rejected(self):
        with pytest.raises(IngestError):
            MarketTimeline(periods=["2012-01-02"], assets=["A"],
                           returns=np.zeros((1, 2)), volumes=-np.ones((1, 1)))

    def test_immutable(self, tiny_timeline):
        with pytest.raises(ValueError):
            tiny_timeline.returns[0, 0] = 1.0


class TestVolatility:
    def test_equal_prices_zero(self):
        assert estimate_volatility(100.0, 100.0) == 0.0

    def test_derived_value(self):
        # |log 100 - log 102| frozen via direct evaluation
        expected = abs(math.log(100.0) - math.log(102.0))
        assert np.isclose(estimate_volatility(100.0, 102.0), expected)
        assert np.isclose(estimate_volatility(100.0, 102.0), 0.019802627296179712)

    def test_symmetry(self):
        assert estimate_volatility(102.0, 100.0) == estimate_volatility(100.0, 102.0)

    def test_nonpositive_price(self):
        with pytest.raises(DomainError):
            estimate_volatility(0.0, 100.0)


class TestMovingAverage:
    def test_constant_series(self):
        series = np.full(30, 10.0)
        assert forecast_moving_average(series, 10, 15) == 10.0

    def test_arithmetic_mean(self):
        # values 1..10 strictly before t
        series = np.concatenate([[99.0], np.arange(1.0, 11.0), [99.0]])
        assert forecast_moving_average(series, 10, 11) == 5.5

    def test_history_error_at_boundary(self):
        with pytest.raises(HistoryError):
            forecast_moving_average(np.arange(30.0), 10, 10)

    def test_no_lookahead_by_mutation(self):
        series = np.arange(40.0)
        base = forecast_moving_average(series, 10, 20)
        mutated = series.copy()
        mutated[20:] = 999.0
        assert forecast_moving_average(mutated, 10, 20) == base


class TestSynthForecast:
    def test_alpha_paper_value(self):
        # 0.0005 / 0.0205 rounds to the quoted 0.024
        alpha = forecast_alpha(0.0005, 0.02)
        assert np.isclose(alpha, 0.024390243902439025)
        assert round(alpha, 3) == 0.024

    def test_noiseless_limit(self, tiny_timeline):
        r_hat = synth_return_forecast(tiny_timeline.returns, 0.0005, 0.0, seed=1)
        np.testing.assert_allclose(r_hat, tiny_timeline.returns)

    def test_deterministic(self, tiny_timeline):
        a = synth_return_forecast(tiny_timeline.returns, 0.0005, 0.02, seed=42)
        b = synth_return_forecast(tiny_timeline.returns, 0.0005, 0.02, seed=42)
        np.testing.assert_array_equal(a, b)
        c = synth_return_forecast(tiny_timeline.returns, 0.0005, 0.02, seed=43)
        assert not np.array_equal(a, c)

    def test_cash_column_kept(self, tiny_timeline):
        r_hat = synth_return_forecast(tiny_timeline.returns, 0.0005, 0.02, seed=7)
        np.testing.assert_array_equal(r_hat[:, -1], tiny_timeline.returns[:, -1])

    def test_correlation_grows_with_alpha(self):
        tl = synthetic_timeline(1, 4000, seed=5)
        realized = tl.returns[:, 0]

        def corr(eps_sq):
            r_hat = synth_return_forecast(tl.returns, 0.0005, eps_sq, seed=11)[:, 0]
            return np.corrcoef(realized, r_hat)[0, 1]

        c_low, c_mid, c_zero = corr(0.02), corr(0.002), corr(0.0)
        assert c_low < c_mid < c_zero
        assert np.isclose(c_zero, 1.0)


class TestFactorRisk:
    def test_full_rank_exact(self, rng):
        window = rng.normal(0.0, 0.01, (50, 4))
        window[:, -1] = 1e-4
        fm = estimate_factor_risk(window, k=4)
        second = window.T @ window / 50
        second[-1, :] = 0.0
        second[:, -1] = 0.0
        np.testing.assert_allclose(fm.dense(), second, atol=1e-10)
        assert np.all(fm.idiosyncratic <= 1e-15)

    def test_diagonal_match(self, rng):
        window = rng.normal(0.0, 0.01, (80, 6))
        fm = estimate_factor_risk(window, k=2)
        second = window.T @ window / 80
        second[-1, :] = 0.0
        second[:, -1] = 0.0
        np.testing.assert_allclose(np.diag(fm.dense()), np.diag(second), atol=1e-12)

    def test_psd(self, rng):
        window = rng.normal(0.0, 0.01, (40, 8))
        fm = estimate_factor_risk(window, k=3)
        eigvals = np.linalg.eigvalsh(fm.dense())
        assert eigvals.min() >= -1e-8 * np.trace(fm.dense())

    def test_cash_riskless(self, rng):
        window = rng.normal(0.0, 0.01, (40, 5))
        fm = estimate_factor_risk(window, k=2)
        assert np.all(fm.loadings[-1] == 0.0)
        assert fm.idiosyncratic[-1] == 0.0

    def test_k_too_large(self, rng):
        with pytest.raises(DomainError):
            estimate_factor_risk(rng.normal(size=(30, 4)), k=5)

    def test_window_too_short(self, rng):
        with pytest.raises(HistoryError):
            estimate_factor_risk(rng.normal(size=(2, 4)), k=3)

    def test_sign_determinism(self, rng):
        window = rng.normal(0.0, 0.01, (60, 5))
        a = estimate_factor_risk(window, k=3)
        b = estimate_factor_risk(window.copy(), k=3)
        np.testing.assert_array_equal(a.loadings, b.loadings)
        for j in range(3):
            col = a.loadings[:, j]
            nz = np.nonzero(np.abs(col) > 1e-12)[0]
            assert col[nz[0]] > 0

    def test_monthly_schedule_and_fallback(self):
        tl = synthetic_timeline(4, 120, seed=2)
        models = MonthlyRiskModels(tl, k=2, window=40)
        early = models.model_for(0)        # before any valid month start
        first_valid = models.model_for(45)
        assert early.valid_from == first_valid.valid_from
        later = models.model_for(100)
        assert later.valid_from > first_valid.valid_from
        # model constant within a month
        assert models.model_for(100).valid_from == models.model_for(101).valid_from

    def test_monthly_requires_some_history(self):
        tl = synthetic_timeline(3, 30, seed=2)
        with pytest.raises(HistoryError):
            MonthlyRiskModels(tl, k=2, window=500)


class TestPerturb:
    def test_zero_magnitude_identity(self, tiny_timeline):
        out = perturb(tiny_timeline, "volumes", 0.0, seed=1)
        np.testing.assert_array_equal(out.volumes, tiny_timeline.volumes)

    def test_ten_percent_bound(self, tiny_timeline):
        out = perturb(tiny_timeline, "volumes", 0.10, seed=3)
        ratio = out.volumes / tiny_timeline.volumes
        assert np.all(ratio >= 0.9 - 1e-12)
        assert np.all(ratio <= 1.1 + 1e-12)
        assert not np.allclose(ratio, 1.0)

    def test_seeds_differ_same_shape(self, tiny_timeline):
        a = perturb(tiny_timeline, "returns", 0.05, seed=1)
        b = perturb(tiny_timeline, "returns", 0.05, seed=2)
        assert a.returns.shape == b.returns.shape
        assert not np.array_equal(a.returns, b.returns)
        np.testing.assert_array_equal(a.returns,
                                      perturb(tiny_timeline, "returns", 0.05, seed=1).returns)

    def test_returns_clamped(self):
        tl = MarketTimeline(periods=["2012-01-02"], assets=["A"],
                            returns=np.array([[-0.999999999, 0.0]]),
                            volumes=np.ones((1, 1)))
        out = perturb(tl, "returns", 0.5, seed=0)
        assert np.all(1.0 + out.returns[:, :-1] >= 1e-10)

    def test_cash_rate_untouched(self, tiny_timeline):
        out = perturb(tiny_timeline, "returns", 0.10, seed=4)
        np.testing.assert_array_equal(out.returns[:, -1], tiny_timeline.returns[:, -1])

    def test_unknown_series(self, tiny_timeline):
        with pytest.raises(SpecError):
            perturb(tiny_timeline, "prices_banana", 0.1, seed=0)


class TestForecastProvider:
    def test_no_lookahead_mutation(self):
        tl = synthetic_timeline(3, 40, seed=8)
        r_hat = synth_return_forecast(tl.returns, 0.0005, 0.02, seed=1)
        provider = ForecastProvider(tl, r_hat, ma_window=10)
        base = provider.at(20, horizon=1)

        mutated_vol = tl.volumes.copy()
        mutated_vol[20:] *= 7.0
        mutated = tl.with_arrays(volumes=mutated_vol)
        provider2 = ForecastProvider(mutated, r_hat, ma_window=10)
        np.testing.assert_array_equal(provider2.at(20, horizon=1).v_hat, base.v_hat)

    def test_horizon_rows(self):
        tl = synthetic_timeline(3, 40, seed=8)
        r_hat = synth_return_forecast(tl.returns, 0.0005, 0.02, seed=1)
        provider = ForecastProvider(tl, r_hat, ma_window=10)
        fc = provider.at(20, horizon=3)
        assert fc.horizon == 3
        np.testing.assert_array_equal(fc.r_hat, r_hat[20:23])
        # truncated at the end of data
        fc_end = provider.at(38, horizon=5)
        assert fc_end.horizon == 2
