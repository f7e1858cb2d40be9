"""Transaction and holding cost models and the realized cash-trade accounting.

Both cost functions work identically in dollar and normalized form: the
transaction cost takes dollar trades with dollar volume, or value-normalized
trades with value-normalized volume; the holding cost is the same function
either way. All functions are pure over immutable parameter bundles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SpecError


def _vec(x, n: int, name: str) -> np.ndarray:
    out = np.broadcast_to(np.asarray(x, dtype=float), (n,)).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TcostParams:
    """Per-asset transaction cost coefficients for one period.

    half_spread (a) and asymmetry (c) are unitless fractions; impact (b) is a
    dimensionless coefficient multiplying sigma * |x|^(3/2) / V^(1/2); volume
    must share the normalization of the trades passed to :func:`tcost`.
    quad is the optional quadratic coefficient; spread_tiers is an optional
    list of (extra_slope, kink) pairs adding piecewise-linear spread beyond
    the kink. Both default to off.
    """

    half_spread: np.ndarray
    impact: np.ndarray
    sigma: np.ndarray
    volume: np.ndarray
    asymmetry: np.ndarray
    quad: np.ndarray | None = None
    spread_tiers: tuple = ()

    @classmethod
    def build(cls, n: int, half_spread=0.0, impact=0.0, sigma=0.0, volume=1.0,
              asymmetry=0.0, quad=None, spread_tiers=()) -> "TcostParams":
        return cls(
            half_spread=_vec(half_spread, n, "half_spread"),
            impact=_vec(impact, n, "impact"),
            sigma=_vec(sigma, n, "sigma"),
            volume=_vec(volume, n, "volume"),
            asymmetry=_vec(asymmetry, n, "asymmetry"),
            quad=None if quad is None else _vec(quad, n, "quad"),
            spread_tiers=tuple((_vec(s, n, "tier slope"), _vec(k, n, "tier kink"))
                               for s, k in spread_tiers),
        )

    def __post_init__(self):
        if np.any(self.half_spread < 0) or np.any(self.impact < 0):
            raise SpecError("half_spread and impact coefficients must be >= 0")
        if np.any(self.sigma < 0):
            raise SpecError("sigma must be >= 0")

    @property
    def n(self) -> int:
        return self.half_spread.shape[0]

    def impact_coef(self) -> np.ndarray:
        """Coefficient of |x|^(3/2): impact * sigma / sqrt(volume)."""
        if np.any(self.volume <= 0):
            raise DomainError("volume must be positive in the transaction cost model")
        return self.impact * self.sigma / np.sqrt(self.volume)

    def scaled(self, gamma: float) -> "TcostParams":
        """Scale every cost coefficient (not volume/sigma) by gamma."""
        return TcostParams(
            half_spread=gamma * self.half_spread,
            impact=gamma * self.impact,
            sigma=self.sigma,
            volume=self.volume,
            asymmetry=gamma * self.asymmetry,
            quad=None if self.quad is None else gamma * self.quad,
            spread_tiers=tuple((gamma * s, k) for s, k in self.spread_tiers),
        )


@dataclass(frozen=True)
class HcostParams:
    """Per-asset holding cost rates for one period.

    borrow_fee (s) charges short positions, fund_fee (f) charges holdings
    (ETF management fee), dividend (d) enters as negative cost. cash_borrow
    is the premium for borrowing cash beyond the modeled interest rate;
    multiplier scales the whole per-period charge (e.g. 3 for a Friday when
    costs accrue over the weekend).
    """

    borrow_fee: np.ndarray
    fund_fee: np.ndarray
    dividend: np.ndarray
    cash_borrow: float = 0.0
    multiplier: float = 1.0

    @classmethod
    def build(cls, n: int, borrow_fee=0.0, fund_fee=0.0, dividend=0.0,
              cash_borrow=0.0, multiplier=1.0) -> "HcostParams":
        return cls(
            borrow_fee=_vec(borrow_fee, n, "borrow_fee"),
            fund_fee=_vec(fund_fee, n, "fund_fee"),
            dividend=_vec(dividend, n, "dividend"),
            cash_borrow=float(cash_borrow),
            multiplier=float(multiplier),
        )

    def __post_init__(self):
        if np.any(self.borrow_fee < 0) or np.any(self.dividend < 0):
            raise SpecError("borrow fees and dividend rates must be >= 0")
        if self.cash_borrow < 0 or self.multiplier <= 0:
            raise SpecError("cash_borrow must be >= 0 and multiplier > 0")

    @property
    def n(self) -> int:
        return self.borrow_fee.shape[0]

    def scaled(self, gamma: float) -> "HcostParams":
        return HcostParams(
            borrow_fee=gamma * self.borrow_fee,
            fund_fee=gamma * self.fund_fee,
            dividend=gamma * self.dividend,
            cash_borrow=gamma * self.cash_borrow,
            multiplier=self.multiplier,
        )


@dataclass(frozen=True)
class TcostCoefficients:
    """Static per-asset coefficients; combine with per-period sigma and volume.

    This is the piece of the transaction cost model that does not move with
    market data: half-spread, impact scale, asymmetry, optional extras.
    """

    half_spread: np.ndarray
    impact: np.ndarray
    asymmetry: np.ndarray
    quad: np.ndarray | None = None
    spread_tiers: tuple = ()

    @classmethod
    def build(cls, n: int, half_spread=0.0, impact=0.0, asymmetry=0.0,
              quad=None, spread_tiers=()) -> "TcostCoefficients":
        return cls(
            half_spread=_vec(half_spread, n, "half_spread"),
            impact=_vec(impact, n, "impact"),
            asymmetry=_vec(asymmetry, n, "asymmetry"),
            quad=None if quad is None else _vec(quad, n, "quad"),
            spread_tiers=tuple((_vec(s, n, "tier slope"), _vec(k, n, "tier kink"))
                               for s, k in spread_tiers),
        )

    @property
    def n(self) -> int:
        return self.half_spread.shape[0]

    def at(self, sigma, volume) -> TcostParams:
        """Instantiate period parameters; volume must match the trade units."""
        return TcostParams(
            half_spread=self.half_spread,
            impact=self.impact,
            sigma=_vec(sigma, self.n, "sigma"),
            volume=_vec(volume, self.n, "volume"),
            asymmetry=self.asymmetry,
            quad=self.quad,
            spread_tiers=self.spread_tiers,
        )


def tcost(x, p: TcostParams) -> float:
    """Separable transaction cost of the asset trade vector ``x``.

    Per asset: a|x| + b sigma |x|^(3/2) / sqrt(V) + c x, plus the optional
    quadratic and tiered-spread extras. Zero trade costs exactly zero.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise DomainError(f"trade vector shape {x.shape} != ({p.n},)")
    ax = np.abs(x)
    total = float(p.half_spread @ ax + p.impact_coef() @ (ax ** 1.5) + p.asymmetry @ x)
    if p.quad is not None:
        total += float(p.quad @ (x * x))
    for slope, kink in p.spread_tiers:
        total += float(slope @ np.maximum(ax - kink, 0.0))
    return total


def hcost(w_plus, p: HcostParams) -> float:
    """Holding cost of the post-trade portfolio (weights or dollars).

    Accepts an (n+1,) vector with cash last or an (n,) asset vector; the
    formula is s'(w)_‑ + f'w − d'w over asset entries, plus the optional cash
    borrow premium, all scaled by the period multiplier.
    """
    w_plus = np.asarray(w_plus, dtype=float)
    if w_plus.shape == (p.n + 1,):
        assets, cash = w_plus[:-1], w_plus[-1]
    elif w_plus.shape == (p.n,):
        assets, cash = w_plus, None
    else:
        raise DomainError(f"post-trade vector shape {w_plus.shape} incompatible with n={p.n}")
    neg = np.maximum(-assets, 0.0)
    total = float(p.borrow_fee @ neg + p.fund_fee @ assets - p.dividend @ assets)
    if p.cash_borrow > 0 and cash is not None:
        total += p.cash_borrow * max(-cash, 0.0)
    return p.multiplier * total


def realize_cash_trade(z_assets, w, tp: TcostParams, hp: HcostParams,
                       external: float = 0.0) -> float:
    """Cash trade closing the self-financing identity exactly.

    Returns z_cash so that 1'z + tcost(z_assets) + hcost(w + z) == external,
    where ``external`` is an optional normalized deposit (+) or withdrawal (-).
    When a cash borrow premium is configured the premium term depends on the
    post-trade cash itself; both branches have closed forms.
    """
    z_assets = np.asarray(z_assets, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.shape != (tp.n + 1,):
        raise DomainError(f"weights shape {w.shape} != ({tp.n + 1},)")
    w_plus_assets = w[:-1] + z_assets
    base = float(np.sum(z_assets)) + tcost(z_assets, tp) + hcost(w_plus_assets, hp)
    if hp.cash_borrow == 0.0:
        return external - base
    # With a premium: z_c = ext - base - m*s_c*(w_c + z_c)_-  (m = multiplier)
    candidate = external - base
    if w[-1] + candidate >= 0.0:
        return candidate
    rate = hp.multiplier * hp.cash_borrow
    if rate >= 1.0:
        raise DomainError("cash borrow premium per period must be < 1")
    return (external - base + rate * w[-1]) / (1.0 - rate)
