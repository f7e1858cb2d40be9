"""Convex problem IR, canonicalization to conic form, and interior-point solve."""

from .expr import Affine, Var, constant, var_expr
from .terms import (
    AbsLeq,
    AbsTerm,
    CostBudgetLeq,
    EqZero,
    ExpQuadTerm,
    FactorQuadTerm,
    HingeQuadTerm,
    HingeTerm,
    LeqZero,
    LinearTerm,
    MaxQuadTerm,
    NormOneLeq,
    PowerTerm,
    QuadTerm,
    SoftConstraintTerm,
    SquaredAbsTerm,
    SumKLargestLeq,
    psd_factor,
    sum_k_largest,
)
from .canon import ConvexProblem, canonicalize
from .solve import Solution, solve, verify

__all__ = [
    "Affine", "Var", "constant", "var_expr",
    "LinearTerm", "AbsTerm", "HingeTerm", "PowerTerm", "QuadTerm", "FactorQuadTerm",
    "MaxQuadTerm", "HingeQuadTerm", "ExpQuadTerm", "SquaredAbsTerm", "SoftConstraintTerm",
    "EqZero", "LeqZero", "AbsLeq", "NormOneLeq", "SumKLargestLeq", "CostBudgetLeq",
    "ConvexProblem", "canonicalize", "Solution", "solve", "verify",
    "psd_factor", "sum_k_largest",
]
