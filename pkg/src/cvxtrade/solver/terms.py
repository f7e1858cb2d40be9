"""Catalog of convex objective terms and constraints.

Every class here is convex by construction: weights are validated
nonnegative and quadratic matrices positive semidefinite at build time, so
carrying the type is the convexity witness. Each term knows how to evaluate
itself numerically (used by the verifier and by tests as an independent
route from the conic lowering in canon.py).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CanonError, ModelError, SpecError
from .expr import Affine


def _check_weights(w, rows: int, what: str) -> np.ndarray:
    w = np.broadcast_to(np.asarray(w, dtype=float), (rows,)).copy()
    if np.any(w < 0):
        raise SpecError(f"{what} weights must be nonnegative for convexity")
    return w


def psd_factor(M: np.ndarray, repair_frac: float = 1e-8) -> np.ndarray:
    """Return L with M = L.T @ L, repairing tiny negative eigenvalues.

    Eigenvalues in (-repair_frac * trace, 0) are clamped to zero; anything
    more negative is rejected as a genuinely indefinite input.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ModelError("quadratic matrix must be square")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ModelError("quadratic matrix must be symmetric")
    eigvals, eigvecs = np.linalg.eigh(M)
    floor = -repair_frac * max(np.trace(M), 0.0) - 1e-300
    if eigvals.min() < floor:
        raise ModelError(
            f"matrix is not PSD: min eigenvalue {eigvals.min():.3e} below repair threshold")
    lam = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(lam)).T


# ---------------------------------------------------------------------------
# Objective terms (all are costs to be minimized)
# ---------------------------------------------------------------------------

@dataclass
class LinearTerm:
    """sum of the rows of an affine expression."""

    expr: Affine

    def value(self, assign) -> float:
        return float(self.expr.value(assign).sum())


@dataclass
class AbsTerm:
    """weights' |expr|  (weighted l1)."""

    weights: np.ndarray
    expr: Affine

    def __post_init__(self):
        self.weights = _check_weights(self.weights, self.expr.rows, "abs term")

    def value(self, assign) -> float:
        return float(self.weights @ np.abs(self.expr.value(assign)))


@dataclass
class HingeTerm:
    """weights' (expr)_+ ."""

    weights: np.ndarray
    expr: Affine

    def __post_init__(self):
        self.weights = _check_weights(self.weights, self.expr.rows, "hinge term")

    def value(self, assign) -> float:
        return float(self.weights @ np.maximum(self.expr.value(assign), 0.0))


@dataclass
class PowerTerm:
    """weights' |expr|^(3/2), the market-impact exponent."""

    weights: np.ndarray
    expr: Affine

    def __post_init__(self):
        self.weights = _check_weights(self.weights, self.expr.rows, "power term")

    def value(self, assign) -> float:
        return float(self.weights @ np.abs(self.expr.value(assign)) ** 1.5)


@dataclass
class QuadTerm:
    """gamma * expr' M expr with M PSD."""

    gamma: float
    expr: Affine
    matrix: np.ndarray
    _factor: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.gamma < 0:
            raise SpecError("quadratic term multiplier must be >= 0")
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (self.expr.rows, self.expr.rows):
            raise CanonError("quadratic matrix shape mismatches expression rows")
        self._factor = psd_factor(self.matrix)

    @property
    def factor(self) -> np.ndarray:
        return self._factor

    def value(self, assign) -> float:
        v = self.expr.value(assign)
        return self.gamma * float(v @ self.matrix @ v)


@dataclass
class FactorQuadTerm:
    """gamma * (y' factor_cov y + expr' diag(idio) expr) with y = loadings' expr.

    Keeping the factor exposures as auxiliary variables preserves the
    diagonal-plus-low-rank structure, so solve cost scales as O(n k^2)
    instead of O(n^3).
    """

    gamma: float
    expr: Affine
    loadings: np.ndarray
    factor_cov: np.ndarray
    idio: np.ndarray

    def __post_init__(self):
        if self.gamma < 0:
            raise SpecError("risk multiplier must be >= 0")
        self.loadings = np.asarray(self.loadings, dtype=float)
        self.factor_cov = np.asarray(self.factor_cov, dtype=float)
        self.idio = np.asarray(self.idio, dtype=float)
        n, k = self.loadings.shape
        if self.expr.rows != n or self.factor_cov.shape != (k, k) or self.idio.shape != (n,):
            raise CanonError("factor model shapes mismatch expression")
        if np.any(self.idio < 0):
            raise ModelError("idiosyncratic variances must be >= 0")
        psd_factor(self.factor_cov)

    def value(self, assign) -> float:
        v = self.expr.value(assign)
        y = self.loadings.T @ v
        return self.gamma * float(y @ self.factor_cov @ y + v @ (self.idio * v))


@dataclass
class MaxQuadTerm:
    """gamma * max_i expr' M_i expr  (worst case over covariance scenarios)."""

    gamma: float
    expr: Affine
    matrices: tuple

    def __post_init__(self):
        if self.gamma < 0:
            raise SpecError("risk multiplier must be >= 0")
        if not self.matrices:
            raise SpecError("worst-case term needs at least one scenario")
        self.matrices = tuple(np.asarray(M, dtype=float) for M in self.matrices)
        self._factors = tuple(psd_factor(M) for M in self.matrices)

    @property
    def factors(self):
        return self._factors

    def value(self, assign) -> float:
        v = self.expr.value(assign)
        return self.gamma * max(float(v @ M @ v) for M in self.matrices)


@dataclass
class HingeQuadTerm:
    """gamma * (expr' M expr - threshold)_+  (hinge-transformed quadratic)."""

    gamma: float
    expr: Affine
    matrix: np.ndarray
    threshold: float

    def __post_init__(self):
        if self.gamma < 0 or self.threshold < 0:
            raise SpecError("hinge-quad multiplier and threshold must be >= 0")
        self.matrix = np.asarray(self.matrix, dtype=float)
        self._factor = psd_factor(self.matrix)

    @property
    def factor(self):
        return self._factor

    def value(self, assign) -> float:
        v = self.expr.value(assign)
        return self.gamma * max(float(v @ self.matrix @ v) - self.threshold, 0.0)


def exp_majorant_pieces(eta: float, n_pieces: int = 400, span: float = 10.0):
    """Chords of u -> exp(u/eta) on [0, span*eta]: slopes and intercepts.

    Chords of a convex function upper-bound it on each segment; with 400
    uniform pieces the relative error is below 1e-4 on the covered range.
    """
    if eta <= 0:
        raise SpecError("exponential transform scale must be positive")
    knots = np.linspace(0.0, span * eta, n_pieces + 1)
    fvals = np.exp(knots / eta)
    slopes = np.diff(fvals) / np.diff(knots)
    intercepts = fvals[:-1] - slopes * knots[:-1]
    return slopes, intercepts


@dataclass
class ExpQuadTerm:
    """gamma * exp(expr' M expr / eta) via a piecewise-linear majorant.

    The conic backend has no exponential cone in the catalog we use, so the
    transform degrades to a documented chord majorant accurate to 1e-4
    relative on quadratic values in [0, 10 eta].
    """

    gamma: float
    expr: Affine
    matrix: np.ndarray
    eta: float

    def __post_init__(self):
        if self.gamma < 0:
            raise SpecError("risk multiplier must be >= 0")
        self.matrix = np.asarray(self.matrix, dtype=float)
        self._factor = psd_factor(self.matrix)
        self._pieces = exp_majorant_pieces(self.eta)

    @property
    def factor(self):
        return self._factor

    @property
    def pieces(self):
        return self._pieces

    def value(self, assign) -> float:
        v = self.expr.value(assign)
        u = float(v @ self.matrix @ v)
        slopes, intercepts = self._pieces
        return self.gamma * float(np.max(slopes * u + intercepts))


@dataclass
class SquaredAbsTerm:
    """gamma * kappa * (sigma' |expr|)^2  (covariance forecast error guard)."""

    gamma: float
    kappa: float
    sigma: np.ndarray
    expr: Affine

    def __post_init__(self):
        if self.gamma < 0 or not 0 <= self.kappa < 1:
            raise SpecError("need gamma >= 0 and 0 <= kappa < 1")
        self.sigma = _check_weights(self.sigma, self.expr.rows, "volatility")

    def value(self, assign) -> float:
        s = float(self.sigma @ np.abs(self.expr.value(assign)))
        return self.gamma * self.kappa * s * s


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass
class EqZero:
    """expr == 0 elementwise."""

    expr: Affine

    def relax_dim(self) -> int:
        return self.expr.rows

    def excess(self, assign) -> np.ndarray:
        return np.abs(self.expr.value(assign))

    def violation(self, assign) -> float:
        v = self.excess(assign)
        return float(np.max(v)) if v.size else 0.0


@dataclass
class LeqZero:
    """expr <= 0 elementwise."""

    expr: Affine

    def relax_dim(self) -> int:
        return self.expr.rows

    def excess(self, assign) -> np.ndarray:
        return self.expr.value(assign)

    def violation(self, assign) -> float:
        v = self.excess(assign)
        return float(np.max(v)) if v.size else 0.0


@dataclass
class AbsLeq:
    """|expr| <= bound elementwise (bound affine with matching rows)."""

    expr: Affine
    bound: Affine

    def __post_init__(self):
        if self.bound.rows != self.expr.rows:
            raise CanonError("bound rows mismatch")

    def relax_dim(self) -> int:
        return self.expr.rows

    def excess(self, assign) -> np.ndarray:
        return np.abs(self.expr.value(assign)) - self.bound.value(assign)

    def violation(self, assign) -> float:
        return float(np.max(self.excess(assign)))


@dataclass
class NormOneLeq:
    """||expr||_1 <= bound (scalar affine bound)."""

    expr: Affine
    bound: Affine

    def __post_init__(self):
        if self.bound.rows != 1:
            raise CanonError("norm-one bound must be scalar")

    def relax_dim(self) -> int:
        return 1

    def excess(self, assign) -> np.ndarray:
        return np.array([np.abs(self.expr.value(assign)).sum()
                         - self.bound.value(assign)[0]])

    def violation(self, assign) -> float:
        return float(self.excess(assign)[0])


@dataclass
class SumKLargestLeq:
    """sum of the k largest entries of expr <= bound.

    Lowered through the epigraph: exists theta with
    k*theta + 1'(expr - theta)_+ <= bound. Fractional k interpolates the
    integer cases.
    """

    expr: Affine
    k: float
    bound: float

    def __post_init__(self):
        if not 0 < self.k <= self.expr.rows:
            raise SpecError(f"k={self.k} must be in (0, {self.expr.rows}]")

    def relax_dim(self) -> int:
        return 1

    def excess(self, assign) -> np.ndarray:
        return np.array([sum_k_largest(self.expr.value(assign), self.k) - self.bound])

    def violation(self, assign) -> float:
        return float(self.excess(assign)[0])


def sum_k_largest(values: np.ndarray, k: float) -> float:
    """Sum of the k largest entries, linearly interpolated for fractional k."""
    srt = np.sort(np.asarray(values, dtype=float))[::-1]
    whole = int(np.floor(k))
    total = float(srt[:whole].sum())
    frac = k - whole
    if frac > 0 and whole < srt.size:
        total += frac * float(srt[whole])
    return total


@dataclass
class CostBudgetLeq:
    """linear + sum of weighted abs/power/hinge pieces <= bound.

    General convex cost budget: ``linear`` is a scalar affine; each part is a
    (weights, expr) pair contributing weights'|expr|, weights'|expr|^(3/2),
    or weights'(expr)_+ respectively. Covers the liquidation-loss constraint
    and the exact (relaxed) self-financing inequality.
    """

    linear: Affine
    abs_parts: tuple = ()
    power_parts: tuple = ()
    hinge_parts: tuple = ()
    bound: float = 0.0

    def __post_init__(self):
        if self.linear.rows != 1:
            raise CanonError("cost budget linear part must be scalar")
        def check(parts, what):
            return tuple((_check_weights(w, e.rows, what), e) for w, e in parts)
        self.abs_parts = check(self.abs_parts, "cost budget abs")
        self.power_parts = check(self.power_parts, "cost budget power")
        self.hinge_parts = check(self.hinge_parts, "cost budget hinge")

    def relax_dim(self) -> int:
        return 1

    def lhs(self, assign) -> float:
        total = float(self.linear.value(assign)[0])
        for w, e in self.abs_parts:
            total += float(w @ np.abs(e.value(assign)))
        for w, e in self.power_parts:
            total += float(w @ np.abs(e.value(assign)) ** 1.5)
        for w, e in self.hinge_parts:
            total += float(w @ np.maximum(e.value(assign), 0.0))
        return total

    def excess(self, assign) -> np.ndarray:
        return np.array([self.lhs(assign) - self.bound])

    def violation(self, assign) -> float:
        return float(self.excess(assign)[0])


CONSTRAINT_KINDS = (EqZero, LeqZero, AbsLeq, NormOneLeq, SumKLargestLeq, CostBudgetLeq)


@dataclass
class SoftConstraintTerm:
    """Penalty replacing a hard constraint: gamma' (violation)_+ or gamma'|h|.

    For large priorities the optimizer satisfies the hard constraint whenever
    it is feasible; gamma == 0 removes the constraint entirely.
    """

    constraint: object
    gamma: object  # scalar or vector matching relax_dim

    def __post_init__(self):
        if not isinstance(self.constraint, CONSTRAINT_KINDS):
            raise SpecError(f"cannot soften {type(self.constraint).__name__}")
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if np.any(g < 0):
            raise SpecError("soft-constraint priority must be >= 0")
        self.gamma = np.broadcast_to(g, (self.constraint.relax_dim(),)).copy()

    def value(self, assign) -> float:
        con = self.constraint
        if isinstance(con, EqZero):
            return float(self.gamma @ con.excess(assign))  # excess is |h| already
        return float(self.gamma @ np.maximum(con.excess(assign), 0.0))


TERM_KINDS = (LinearTerm, AbsTerm, HingeTerm, PowerTerm, QuadTerm, FactorQuadTerm,
              MaxQuadTerm, HingeQuadTerm, ExpQuadTerm, SquaredAbsTerm, SoftConstraintTerm)
