"""Risk measures as convex objective terms: quadratic (dense or factor),
transformed, worst-case multi-scenario, and the two forecast-error guards.

Every measure is expressed relative to benchmark weights (the cash benchmark
e_{n+1} reduces active risk to absolute risk, since the cash row and column
of the covariance are zero). ``evaluate_risk`` is the plain-numpy route used
by the simulator and tests; ``build_risk_term`` emits solver terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ModelError, SpecError
from .market_data import FactorRiskModel
from .solver import (
    Affine,
    AbsTerm,
    ExpQuadTerm,
    FactorQuadTerm,
    HingeQuadTerm,
    MaxQuadTerm,
    QuadTerm,
    SquaredAbsTerm,
    psd_factor,
)

RISK_KINDS = ("quadratic_dense", "quadratic_factor", "transformed", "worst_case",
              "return_forecast_error", "covariance_forecast_error")


def cash_benchmark(n_assets: int) -> np.ndarray:
    wb = np.zeros(n_assets + 1)
    wb[-1] = 1.0
    return wb


def uniform_benchmark(n_assets: int) -> np.ndarray:
    wb = np.full(n_assets + 1, 1.0 / n_assets)
    wb[-1] = 0.0
    return wb


def _validate_cov(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    psd_factor(sigma)  # symmetry + PSD repair threshold check
    return sigma


@dataclass
class RiskSpec:
    """Declarative description of one risk term.

    kind selects the measure; gamma is the risk-aversion multiplier.
    transform is ('hinge', threshold) or ('exp', scale) and applies only to
    kind='transformed'. rho holds return-forecast half-widths (per asset),
    kappa the covariance perturbation fraction.
    """

    kind: str
    gamma: float = 1.0
    sigma: np.ndarray | None = None
    factor_model: FactorRiskModel | None = None
    benchmark: np.ndarray | None = None
    transform: tuple | None = None
    scenarios: tuple = ()
    rho: np.ndarray | None = None
    kappa: float = 0.0

    def __post_init__(self):
        if self.kind not in RISK_KINDS:
            raise SpecError(f"unknown risk kind {self.kind!r}")
        if self.gamma < 0:
            raise SpecError("gamma_risk must be >= 0")
        if self.benchmark is not None:
            wb = np.asarray(self.benchmark, dtype=float)
            if abs(wb.sum() - 1.0) > 1e-9 or np.any(wb < -1e-12):
                raise SpecError("benchmark weights must be nonnegative and sum to one")
            self.benchmark = wb
        if self.sigma is not None:
            self.sigma = _validate_cov(self.sigma)
        if self.kind == "transformed":
            if (not isinstance(self.transform, tuple) or len(self.transform) != 2
                    or self.transform[0] not in ("hinge", "exp")):
                raise SpecError("transform must be ('hinge', a) or ('exp', eta)")
            if self.transform[1] < 0 or (self.transform[0] == "exp" and self.transform[1] <= 0):
                raise SpecError("transform parameter out of range")
        if self.kind == "worst_case":
            if not self.scenarios:
                raise SpecError("worst_case needs at least one scenario covariance")
            self.scenarios = tuple(_validate_cov(S) for S in self.scenarios)
        if self.rho is not None:
            self.rho = np.asarray(self.rho, dtype=float)
            if np.any(self.rho < 0):
                raise SpecError("rho must be >= 0")
        if not 0.0 <= self.kappa < 1.0:
            raise SpecError("kappa must lie in [0, 1)")

    def dim(self) -> int:
        if self.sigma is not None:
            return self.sigma.shape[0]
        if self.factor_model is not None:
            return self.factor_model.loadings.shape[0]
        if self.scenarios:
            return self.scenarios[0].shape[0]
        if self.rho is not None and self.benchmark is not None:
            return self.benchmark.shape[0]
        if self.rho is not None:
            return self.rho.shape[0] + 1
        raise SpecError("risk spec has no dimensioned parameter")

    def require_resolved(self):
        """Check the kind's required parameters are present (after templating)."""
        if self.kind == "quadratic_factor" and self.factor_model is None:
            raise SpecError("quadratic_factor needs a factor model")
        if self.kind in ("quadratic_dense", "transformed", "covariance_forecast_error") \
                and self.sigma is None:
            raise SpecError(f"{self.kind} needs a covariance matrix")
        if self.kind == "return_forecast_error" and self.rho is None:
            raise SpecError("return_forecast_error needs rho")

    def benchmark_or_cash(self) -> np.ndarray:
        return self.benchmark if self.benchmark is not None else cash_benchmark(self.dim() - 1)

    def padded_rho(self) -> np.ndarray:
        n1 = self.dim()
        rho = self.rho
        if rho.shape[0] == n1 - 1:
            rho = np.concatenate([rho, [0.0]])
        if rho.shape[0] != n1:
            raise DomainError("rho length must be n or n+1")
        return rho


def evaluate_risk(spec: RiskSpec, x) -> float:
    """Risk value of a concrete (n+1)-weight vector. No solver involved."""
    spec.require_resolved()
    x = np.asarray(x, dtype=float)
    n1 = spec.dim()
    if x.shape != (n1,):
        raise DomainError(f"weight vector shape {x.shape} != ({n1},)")
    v = x - spec.benchmark_or_cash()
    if spec.kind == "quadratic_dense":
        return float(v @ spec.sigma @ v)
    if spec.kind == "quadratic_factor":
        fm = spec.factor_model
        y = fm.loadings.T @ v
        return float(y @ fm.factor_cov @ y + v @ (fm.idiosyncratic * v))
    if spec.kind == "transformed":
        quad = float(v @ spec.sigma @ v)
        mode, param = spec.transform
        return max(quad - param, 0.0) if mode == "hinge" else float(np.exp(quad / param))
    if spec.kind == "worst_case":
        return max(float(v @ S @ v) for S in spec.scenarios)
    if spec.kind == "return_forecast_error":
        return float(spec.padded_rho() @ np.abs(v))
    # covariance_forecast_error
    sig = np.sqrt(np.diag(spec.sigma))
    return float(v @ spec.sigma @ v + spec.kappa * (sig @ np.abs(v)) ** 2)


def sampled_worst_case_cov(spec: RiskSpec, x, n_samples: int = 1000,
                           seed: int = 0, include_extremal: bool = True) -> float:
    """Sampled supremum of v'(Sigma+Delta)v over admissible perturbations.

    Independent check of the covariance-forecast-error closed form: draws
    random symmetric Delta with |Delta_ij| <= kappa*sqrt(Sigma_ii Sigma_jj)
    and optionally includes the extremal sign pattern.
    """
    x = np.asarray(x, dtype=float)
    v = x - spec.benchmark_or_cash()
    sigma = spec.sigma
    sig = np.sqrt(np.diag(sigma))
    cap = spec.kappa * np.outer(sig, sig)
    rng = np.random.default_rng(seed)
    n = sigma.shape[0]
    best = -np.inf
    for _ in range(n_samples):
        raw = rng.uniform(-1.0, 1.0, (n, n))
        delta = cap * (raw + raw.T) / 2.0
        best = max(best, float(v @ (sigma + delta) @ v))
    if include_extremal:
        extremal = cap * np.sign(np.outer(v, v))
        best = max(best, float(v @ (sigma + extremal) @ v))
    return best


def build_risk_term(spec: RiskSpec, post_trade: Affine) -> list:
    """Emit solver-consumable convex terms for the post-trade weight expression.

    Returns a list (the covariance-forecast-error measure contributes two
    terms). A zero multiplier contributes nothing.
    """
    spec.require_resolved()
    n1 = spec.dim()
    if post_trade.rows != n1:
        raise DomainError(f"post-trade expression has {post_trade.rows} rows, expected {n1}")
    if spec.gamma == 0.0:
        return []
    v = post_trade - spec.benchmark_or_cash()
    if spec.kind == "quadratic_dense":
        return [QuadTerm(spec.gamma, v, spec.sigma)]
    if spec.kind == "quadratic_factor":
        fm = spec.factor_model
        return [FactorQuadTerm(spec.gamma, v, fm.loadings, fm.factor_cov, fm.idiosyncratic)]
    if spec.kind == "transformed":
        mode, param = spec.transform
        if mode == "hinge":
            return [HingeQuadTerm(spec.gamma, v, spec.sigma, param)]
        return [ExpQuadTerm(spec.gamma, v, spec.sigma, param)]
    if spec.kind == "worst_case":
        return [MaxQuadTerm(spec.gamma, v, spec.scenarios)]
    if spec.kind == "return_forecast_error":
        return [AbsTerm(spec.gamma * spec.padded_rho(), v)]
    sig = np.sqrt(np.diag(spec.sigma))
    return [QuadTerm(spec.gamma, v, spec.sigma),
            SquaredAbsTerm(spec.gamma, spec.kappa, sig, v)]


# Default risk-aversion grid: anchored at the growth-optimal 1/2 and
# extended upward, log-spaced.
DEFAULT_GAMMA_RISK_GRID = (0.5, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
COARSE_GAMMA_RISK_GRID = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0, 1000.0)
COARSE_GAMMA_TRADE_GRID = (1.0, 2.0, 5.0, 10.0, 20.0)
