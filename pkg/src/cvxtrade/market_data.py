"""Market data: ingestion, storage, derived series, forecasts, and risk-model estimation.

The central type is :class:`MarketTimeline`, a dense per-period / per-asset
store of returns, dollar volumes, and volatilities that back-tests treat as
ground truth. Everything here is immutable after construction and pure given
a seed, so timelines and risk models can be shared across concurrently
running back-tests.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, HistoryError, IngestError, ModelError, SpecError

CASH = "CASH"

_FLOAT_FMT = "%.17g"


def _freeze(a):
    if a is not None:
        a = np.ascontiguousarray(np.asarray(a, dtype=float))
        a.flags.writeable = False
    return a


@dataclass(frozen=True)
class MarketTimeline:
    """Dense per-period market data for ``n`` assets plus an implicit cash slot.

    ``returns`` has shape (T, n+1) with the cash rate in the last column;
    ``volumes`` and ``volatilities`` are (T, n). Prices are optional.
    """

    periods: tuple
    assets: tuple
    returns: np.ndarray
    volumes: np.ndarray
    volatilities: np.ndarray | None = None
    open_prices: np.ndarray | None = None
    close_prices: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "periods", tuple(self.periods))
        object.__setattr__(self, "assets", tuple(self.assets))
        for name in ("returns", "volumes", "volatilities", "open_prices", "close_prices"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        T, n = len(self.periods), len(self.assets)
        if CASH in self.assets:
            raise IngestError("asset identifier CASH is reserved for the cash slot")
        if self.returns.shape != (T, n + 1):
            raise IngestError(f"returns shape {self.returns.shape} != ({T}, {n + 1})")
        if self.volumes.shape != (T, n):
            raise IngestError(f"volumes shape {self.volumes.shape} != ({T}, {n})")
        for name in ("volatilities", "open_prices", "close_prices"):
            a = getattr(self, name)
            if a is not None and a.shape != (T, n):
                raise IngestError(f"{name} shape {a.shape} != ({T}, {n})")
        if not np.all(np.isfinite(self.returns)):
            raise IngestError("non-finite return value", series="returns")
        if np.any(1.0 + self.returns[:, :n] < 0):
            raise IngestError("return below -1 violates nonnegative prices", series="returns")
        if not np.all(np.isfinite(self.volumes)) or np.any(self.volumes < 0):
            raise IngestError("volumes must be finite and nonnegative", series="volumes")
        if self.volatilities is not None and np.any(self.volatilities < 0):
            raise IngestError("volatilities must be nonnegative", series="volatilities")

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def period_index(self, label: str) -> int:
        try:
            return self.periods.index(label)
        except ValueError:
            raise SpecError(f"unknown period label {label!r}") from None

    def month_key(self, t: int) -> str:
        return self.periods[t][:7]

    def cash_returns(self) -> np.ndarray:
        return self.returns[:, -1]

    def with_arrays(self, **kwargs) -> "MarketTimeline":
        data = dict(
            periods=self.periods,
            assets=self.assets,
            returns=self.returns,
            volumes=self.volumes,
            volatilities=self.volatilities,
            open_prices=self.open_prices,
            close_prices=self.close_prices,
        )
        data.update(kwargs)
        return MarketTimeline(**data)


@dataclass(frozen=True)
class FactorRiskModel:
    """Covariance model: loadings @ factor_cov @ loadings.T + diag(idiosyncratic).

    The cash row of the loadings and the cash entry of the idiosyncratic
    variance are zero, so cash is riskless.
    """

    loadings: np.ndarray          # (n+1, k)
    factor_cov: np.ndarray        # (k, k) PSD
    idiosyncratic: np.ndarray     # (n+1,) >= 0
    valid_from: str = ""
    valid_to: str = ""

    def __post_init__(self):
        object.__setattr__(self, "loadings", _freeze(self.loadings))
        object.__setattr__(self, "factor_cov", _freeze(self.factor_cov))
        object.__setattr__(self, "idiosyncratic", _freeze(self.idiosyncratic))
        F, Sf, D = self.loadings, self.factor_cov, self.idiosyncratic
        if F.ndim != 2 or Sf.shape != (F.shape[1], F.shape[1]) or D.shape != (F.shape[0],):
            raise ModelError(
                f"inconsistent factor model shapes: {F.shape}, {Sf.shape}, {D.shape}")
        if not np.allclose(Sf, Sf.T, atol=1e-12):
            raise ModelError("factor covariance must be symmetric")
        w = np.linalg.eigvalsh(Sf)
        if w.size and w.min() < -1e-10 * max(w.max(), 0.0) - 1e-300:
            raise ModelError("factor covariance has a significantly negative eigenvalue")
        if np.any(D < 0):
            raise ModelError("idiosyncratic variances must be nonnegative")
        if np.any(F[-1] != 0.0) or D[-1] != 0.0:
            raise ModelError("cash row of loadings and cash idiosyncratic entry must be zero")

    @property
    def k(self) -> int:
        return self.loadings.shape[1]

    def dense(self) -> np.ndarray:
        F, Sf, D = self.loadings, self.factor_cov, self.idiosyncratic
        return F @ Sf @ F.T + np.diag(D)


@dataclass(frozen=True)
class ForecastSet:
    """Forecasts known at period ``t`` for horizons tau = t .. t+H-1."""

    t_index: int
    t_label: str
    horizon: int
    r_hat: np.ndarray       # (H, n+1)
    v_hat: np.ndarray       # (H, n)
    sigma_hat: np.ndarray   # (H, n)

    def __post_init__(self):
        object.__setattr__(self, "r_hat", _freeze(self.r_hat))
        object.__setattr__(self, "v_hat", _freeze(self.v_hat))
        object.__setattr__(self, "sigma_hat", _freeze(self.sigma_hat))
        if self.horizon < 1 or self.r_hat.shape[0] != self.horizon:
            raise SpecError("forecast horizon must be >= 1 and match r_hat rows")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

RETURNS_HEADER = ("date", "asset", "return")
VOLUMES_HEADER = ("date", "asset", "dollar_volume")
PRICES_HEADER = ("date", "asset", "open", "close")
CASH_HEADER = ("date", "rate")


def _read_rows(path, header, series):
    if not os.path.exists(path):
        raise IngestError("file not found", series=series, path=str(path))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise IngestError("empty file", series=series, path=str(path)) from None
        if tuple(h.strip() for h in first) != header:
            raise IngestError(
                f"expected header {','.join(header)}", series=series, path=str(path), line=1
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError("wrong column count", series=series, path=str(path), line=lineno)
            yield lineno, row


def _parse_value(text, series, path, lineno, date, asset):
    try:
        value = float(text)
    except ValueError:
        raise IngestError("unparseable value", date=date, asset=asset, series=series,
                          path=str(path), line=lineno) from None
    if not math.isfinite(value):
        raise IngestError("non-finite value", date=date, asset=asset, series=series,
                          path=str(path), line=lineno)
    return value


def _load_asset_series(path, header, series, n_values=1):
    """Read a (date, asset, value...) file into {asset: {date: value}}."""
    table: dict = {}
    for lineno, row in _read_rows(path, header, series):
        date, asset = row[0].strip(), row[1].strip()
        vals = tuple(
            _parse_value(row[2 + j], series, path, lineno, date, asset) for j in range(n_values)
        )
        per_asset = table.setdefault(asset, {})
        if date in per_asset:
            raise IngestError("duplicate row", date=date, asset=asset, series=series,
                              path=str(path), line=lineno)
        per_asset[date] = vals if n_values > 1 else vals[0]
    return table


def ingest_csv(returns_path, volumes_path, cash_path, prices_path=None) -> MarketTimeline:
    """Build a dense MarketTimeline from the four CSV series.

    Periods come from the returns file; assets are the intersection of the
    asset sets across the files. A missing (date, asset) cell in any series
    is an error, never silently filled.
    """
    returns = _load_asset_series(returns_path, RETURNS_HEADER, "returns")
    volumes = _load_asset_series(volumes_path, VOLUMES_HEADER, "volumes")
    prices = None
    if prices_path is not None:
        prices = _load_asset_series(prices_path, PRICES_HEADER, "prices", n_values=2)

    cash: dict = {}
    for lineno, row in _read_rows(cash_path, CASH_HEADER, "cash"):
        date = row[0].strip()
        if date in cash:
            raise IngestError("duplicate row", date=date, series="cash",
                              path=str(cash_path), line=lineno)
        cash[date] = _parse_value(row[1], "cash", cash_path, lineno, date, CASH)

    asset_sets = [set(returns), set(volumes)] + ([set(prices)] if prices else [])
    assets = sorted(set.intersection(*asset_sets) - {CASH})
    if not assets:
        raise IngestError("no common assets across series")

    dates = sorted({d for asset in assets for d in returns[asset]})
    if not dates:
        raise IngestError("no dates in returns series", series="returns")

    def dense(table, series, n_values=1):
        shape = (len(dates), len(assets), n_values) if n_values > 1 else (len(dates), len(assets))
        out = np.empty(shape)
        for j, asset in enumerate(assets):
            col = table.get(asset, {})
            for i, date in enumerate(dates):
                if date not in col:
                    raise IngestError("missing cell", date=date, asset=asset, series=series)
                out[i, j] = col[date]
        return out

    r = dense(returns, "returns")
    v = dense(volumes, "volumes")
    cash_col = np.empty(len(dates))
    for i, date in enumerate(dates):
        if date not in cash:
            raise IngestError("missing cell", date=date, asset=CASH, series="cash")
        cash_col[i] = cash[date]

    vols = open_p = close_p = None
    if prices is not None:
        pc = dense(prices, "prices", n_values=2)
        open_p, close_p = pc[:, :, 0], pc[:, :, 1]
        vols = estimate_volatility(open_p, close_p)

    return MarketTimeline(
        periods=dates,
        assets=assets,
        returns=np.column_stack([r, cash_col]),
        volumes=v,
        volatilities=vols,
        open_prices=open_p,
        close_prices=close_p,
    )


def export_csv(timeline: MarketTimeline, out_dir) -> dict:
    """Write the timeline back out as the standard CSV set (17 sig digits).

    Returns the mapping of series name to file path. Re-ingesting the files
    reproduces the timeline bit-exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {}

    def write(name, header, rows):
        path = os.path.join(out_dir, name + ".csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
        paths[name] = path

    fmt = lambda x: _FLOAT_FMT % x
    write("returns", RETURNS_HEADER,
          ((d, a, fmt(timeline.returns[i, j]))
           for i, d in enumerate(timeline.periods) for j, a in enumerate(timeline.assets)))
    write("volumes", VOLUMES_HEADER,
          ((d, a, fmt(timeline.volumes[i, j]))
           for i, d in enumerate(timeline.periods) for j, a in enumerate(timeline.assets)))
    write("cash", CASH_HEADER,
          ((d, fmt(timeline.returns[i, -1])) for i, d in enumerate(timeline.periods)))
    if timeline.open_prices is not None:
        write("prices", PRICES_HEADER,
              ((d, a, fmt(timeline.open_prices[i, j]), fmt(timeline.close_prices[i, j]))
               for i, d in enumerate(timeline.periods) for j, a in enumerate(timeline.assets)))
    return paths


# ---------------------------------------------------------------------------
# Columnar cache (used by the CLI)
# ---------------------------------------------------------------------------

def save_cache(timeline: MarketTimeline, cache_dir) -> str:
    """Persist the timeline as .npy columns plus a manifest; returns a hash."""
    os.makedirs(cache_dir, exist_ok=True)
    arrays = {"returns": timeline.returns, "volumes": timeline.volumes}
    if timeline.volatilities is not None:
        arrays["volatilities"] = timeline.volatilities
    if timeline.open_prices is not None:
        arrays["open_prices"] = timeline.open_prices
        arrays["close_prices"] = timeline.close_prices
    digest = hashlib.sha256()
    for name in sorted(arrays):
        path = os.path.join(cache_dir, name + ".npy")
        np.save(path, arrays[name])
        with open(path, "rb") as fh:
            digest.update(fh.read())
    meta = {"periods": list(timeline.periods), "assets": list(timeline.assets),
            "series": sorted(arrays)}
    import json

    meta_text = json.dumps(meta, sort_keys=True, indent=1)
    with open(os.path.join(cache_dir, "meta.json"), "w", encoding="utf-8") as fh:
        fh.write(meta_text)
    digest.update(meta_text.encode())
    cache_hash = digest.hexdigest()
    with open(os.path.join(cache_dir, "cache_hash.txt"), "w", encoding="utf-8") as fh:
        fh.write(cache_hash + "\n")
    return cache_hash


def load_cache(cache_dir) -> MarketTimeline:
    import json

    meta_path = os.path.join(cache_dir, "meta.json")
    if not os.path.exists(meta_path):
        raise IngestError("not a timeline cache (meta.json missing)", path=str(cache_dir))
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    arrays = {name: np.load(os.path.join(cache_dir, name + ".npy")) for name in meta["series"]}
    return MarketTimeline(
        periods=meta["periods"],
        assets=meta["assets"],
        returns=arrays["returns"],
        volumes=arrays["volumes"],
        volatilities=arrays.get("volatilities"),
        open_prices=arrays.get("open_prices"),
        close_prices=arrays.get("close_prices"),
    )


# ---------------------------------------------------------------------------
# Derived series and forecasts
# ---------------------------------------------------------------------------

def estimate_volatility(open_prices, close_prices):
    """Per-period fractional volatility |log p_open - log p_close|."""
    open_prices = np.asarray(open_prices, dtype=float)
    close_prices = np.asarray(close_prices, dtype=float)
    if np.any(open_prices <= 0) or np.any(close_prices <= 0):
        raise DomainError("prices must be positive to estimate volatility")
    return np.abs(np.log(open_prices) - np.log(close_prices))


def forecast_moving_average(series, window: int, t: int):
    """Mean of the ``window`` values strictly before period ``t`` (no lookahead)."""
    series = np.asarray(series, dtype=float)
    if window < 1:
        raise SpecError("window must be >= 1")
    if t <= window:
        raise HistoryError(f"need t > window, got t={t}, window={window}")
    if t > series.shape[0]:
        raise HistoryError(f"t={t} beyond series length {series.shape[0]}")
    return series[t - window:t].mean(axis=0)


def synth_return_forecast(realized_returns, sigma_r_sq: float, sigma_eps_sq: float,
                          seed: int) -> np.ndarray:
    """Simulated return forecasts: scaled noisy copies of the realized returns.

    Asset columns become alpha * (r + eps) with eps ~ N(0, sigma_eps_sq I) and
    alpha = sigma_r_sq / (sigma_r_sq + sigma_eps_sq); the cash column is kept
    equal to the realized cash rate, which is assumed known. Deterministic for
    a fixed seed.
    """
    if sigma_r_sq <= 0:
        raise DomainError("sigma_r_sq must be positive")
    if sigma_eps_sq < 0:
        raise DomainError("sigma_eps_sq must be nonnegative")
    realized = np.asarray(realized_returns, dtype=float)
    alpha = sigma_r_sq / (sigma_r_sq + sigma_eps_sq)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(sigma_eps_sq), size=realized[:, :-1].shape)
    out = np.empty_like(realized)
    out[:, :-1] = alpha * (realized[:, :-1] + noise)
    out[:, -1] = realized[:, -1]
    return out


def forecast_alpha(sigma_r_sq: float, sigma_eps_sq: float) -> float:
    """Mean-squared-error-optimal shrinkage factor for the synthetic forecast."""
    if sigma_r_sq <= 0:
        raise DomainError("sigma_r_sq must be positive")
    return sigma_r_sq / (sigma_r_sq + sigma_eps_sq)


class ForecastProvider:
    """Produces the ForecastSet a policy is allowed to see at period t.

    Return forecasts come from a precomputed (T, n+1) matrix (e.g. the
    synthetic forecast); volume and volatility forecasts are trailing moving
    averages of realized values, so they use only data strictly before t.
    The same per-period row is reused for every horizon step, matching the
    example workflow where today's forecast of tomorrow equals tomorrow's.
    """

    def __init__(self, timeline: MarketTimeline, r_hat: np.ndarray, ma_window: int = 10):
        if r_hat.shape != timeline.returns.shape:
            raise SpecError("r_hat must match the timeline returns shape")
        if timeline.volatilities is None:
            raise SpecError("timeline has no volatilities; cannot forecast sigma")
        self.timeline = timeline
        self.r_hat = np.asarray(r_hat, dtype=float)
        self.ma_window = ma_window

    @property
    def warmup(self) -> int:
        return self.ma_window + 1

    def at(self, t: int, horizon: int = 1) -> ForecastSet:
        T = self.timeline.n_periods
        if t >= T:
            raise HistoryError(f"period {t} beyond timeline")
        horizon = min(horizon, T - t)
        v_hat = forecast_moving_average(self.timeline.volumes, self.ma_window, t)
        sigma_hat = forecast_moving_average(self.timeline.volatilities, self.ma_window, t)
        rows = np.arange(t, t + horizon)
        return ForecastSet(
            t_index=t,
            t_label=self.timeline.periods[t],
            horizon=horizon,
            r_hat=self.r_hat[rows],
            v_hat=np.tile(v_hat, (horizon, 1)),
            sigma_hat=np.tile(sigma_hat, (horizon, 1)),
        )


# ---------------------------------------------------------------------------
# Factor risk model estimation
# ---------------------------------------------------------------------------

def _fix_eigvec_signs(vecs: np.ndarray) -> np.ndarray:
    """Deterministic sign convention: first nonzero loading positive."""
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        nz = np.nonzero(np.abs(col) > 1e-12)[0]
        if nz.size and col[nz[0]] < 0:
            vecs[:, j] = -col
    return vecs


def estimate_factor_risk(returns_window: np.ndarray, k: int,
                         valid_from: str = "", valid_to: str = "") -> FactorRiskModel:
    """Estimate a k-factor risk model from a window of realized returns.

    Takes the second-moment matrix of the window, keeps its top-k eigenpairs
    as factor loadings/variances, and picks the idiosyncratic diagonal so the
    model matches the empirical diagonal (negative entries clamped to zero).
    The cash row and column are zeroed first: the cash rate is known.
    """
    window = np.asarray(returns_window, dtype=float)
    if window.ndim != 2:
        raise DomainError("returns window must be 2-D")
    M, n_plus_1 = window.shape
    if k < 1 or k > n_plus_1:
        raise DomainError(f"factor count k={k} must satisfy 1 <= k <= {n_plus_1}")
    if M < k:
        raise HistoryError(f"window length {M} < factor count {k}")
    second_moment = window.T @ window / M
    second_moment[-1, :] = 0.0
    second_moment[:, -1] = 0.0
    eigvals, eigvecs = np.linalg.eigh(second_moment)
    order = np.argsort(eigvals)[::-1][:k]
    lam = np.clip(eigvals[order], 0.0, None)
    F = _fix_eigvec_signs(eigvecs[:, order])
    F[-1, :] = 0.0
    D = np.clip(np.diag(second_moment) - np.einsum("ij,j,ij->i", F, lam, F), 0.0, None)
    D[-1] = 0.0
    return FactorRiskModel(loadings=F, factor_cov=np.diag(lam), idiosyncratic=D,
                           valid_from=valid_from, valid_to=valid_to)


class MonthlyRiskModels:
    """Factor models re-estimated on the first period of each month.

    Estimation at period t uses the ``window`` periods strictly before t.
    Months whose start lacks a full window fall back to the earliest valid
    model. Raises HistoryError when no month start has enough history.
    """

    def __init__(self, timeline: MarketTimeline, k: int = 15, window: int = 500):
        self.timeline = timeline
        self.k = k
        self.window = window
        months = [timeline.month_key(t) for t in range(timeline.n_periods)]
        starts = [t for t in range(timeline.n_periods) if t == 0 or months[t] != months[t - 1]]
        self._boundaries = starts
        self._models: dict[int, FactorRiskModel] = {}
        valid = [t for t in starts if t >= window]
        if not valid:
            raise HistoryError(
                f"no month start has the {window}-period warm-up needed for risk estimation")
        self._first_valid = valid[0]

    def _estimate(self, t: int) -> FactorRiskModel:
        if t not in self._models:
            tl = self.timeline
            self._models[t] = estimate_factor_risk(
                tl.returns[t - self.window:t], self.k,
                valid_from=tl.periods[t], valid_to="")
        return self._models[t]

    def model_for(self, t: int) -> FactorRiskModel:
        valid = [s for s in self._boundaries if s <= t and s >= self.window]
        anchor = valid[-1] if valid else self._first_valid
        return self._estimate(anchor)


# ---------------------------------------------------------------------------
# What-if perturbation and synthetic data
# ---------------------------------------------------------------------------

PERTURBABLE = ("returns", "volumes", "volatilities")


def perturb(timeline: MarketTimeline, series: str, relative_magnitude: float,
            seed: int) -> MarketTimeline:
    """Multiply each entry of one series by (1 + u), u uniform on [-m, +m].

    For returns, only asset columns are perturbed (the cash rate is known)
    and the result is clamped so 1 + r stays positive. Deterministic per seed.
    """
    if relative_magnitude < 0:
        raise SpecError("relative_magnitude must be >= 0")
    if series not in PERTURBABLE:
        raise SpecError(f"unknown series {series!r}; expected one of {PERTURBABLE}")
    rng = np.random.default_rng(seed)
    if series == "returns":
        assets = timeline.returns[:, :-1]
        factor = 1.0 + rng.uniform(-relative_magnitude, relative_magnitude, assets.shape)
        new_assets = np.maximum(assets * factor, -1.0 + 1e-9)
        new = np.column_stack([new_assets, timeline.returns[:, -1]])
        return timeline.with_arrays(returns=new)
    source = getattr(timeline, series)
    if source is None:
        raise SpecError(f"timeline has no {series} data")
    factor = 1.0 + rng.uniform(-relative_magnitude, relative_magnitude, source.shape)
    return timeline.with_arrays(**{series: source * factor})


def synthetic_timeline(n_assets: int, n_periods: int, seed: int = 0,
                       start: str = "2012-01-02", cash_rate: float = 4e-5,
                       mean_volume: float = 1e8, daily_vol: float = 0.012,
                       n_factors: int = 4) -> MarketTimeline:
    """Generate a plausible synthetic market for what-if tests and benchmarks.

    Open/close prices are generated so the volatility estimator reproduces
    the intended per-period volatilities exactly, keeping the CSV round-trip
    (which carries prices, not volatilities) lossless.
    """
    import pandas as pd

    rng = np.random.default_rng(seed)
    dates = [d.strftime("%Y-%m-%d")
             for d in pd.bdate_range(start=start, periods=n_periods)]
    assets = [f"A{i:04d}" for i in range(n_assets)]
    loadings = rng.normal(0.0, 1.0, (n_assets, n_factors)) / math.sqrt(n_factors)
    factor_moves = rng.normal(0.0, daily_vol * 0.6, (n_periods, n_factors))
    idio = rng.normal(0.0, daily_vol * 0.8, (n_periods, n_assets))
    drift = rng.normal(2e-4, 1e-4, n_assets)
    asset_returns = np.clip(factor_moves @ loadings.T + idio + drift, -0.5, 0.5)
    returns = np.column_stack([asset_returns, np.full(n_periods, cash_rate)])
    scale = rng.lognormal(0.0, 0.5, n_assets)
    volumes = mean_volume * scale * rng.lognormal(0.0, 0.25, (n_periods, n_assets))
    vols = np.abs(rng.normal(daily_vol, daily_vol * 0.25, (n_periods, n_assets))) + 1e-4
    open_prices = 100.0 * rng.lognormal(0.0, 0.3, n_assets) \
        * rng.lognormal(0.0, 0.02, (n_periods, n_assets))
    close_prices = open_prices * np.exp(
        rng.choice([-1.0, 1.0], (n_periods, n_assets)) * vols)
    return MarketTimeline(periods=dates, assets=assets, returns=returns,
                          volumes=volumes,
                          volatilities=estimate_volatility(open_prices, close_prices),
                          open_prices=open_prices, close_prices=close_prices)
