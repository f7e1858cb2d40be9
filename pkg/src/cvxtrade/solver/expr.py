"""Affine expressions over named variable blocks.

An :class:`Affine` is J x + c where x is the concatenation of variable
blocks; coefficients are stored per block as dense (rows, dim) matrices.
Blocks in this problem family are small (hundreds of columns), so dense
per-block storage is cheap and the canonicalizer assembles one sparse matrix
at the end.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import CanonError

_var_counter = itertools.count()


class Var:
    """A named variable block with a fixed dimension."""

    __slots__ = ("name", "dim", "uid")

    def __init__(self, name: str, dim: int):
        if dim < 1:
            raise CanonError(f"variable {name!r} must have dim >= 1")
        self.name = name
        self.dim = int(dim)
        self.uid = next(_var_counter)

    def __repr__(self):
        return f"Var({self.name}, dim={self.dim})"

    def __hash__(self):
        return self.uid

    def __eq__(self, other):
        return self is other


class Affine:
    """J x + c with per-block coefficient matrices."""

    __slots__ = ("coeffs", "const")

    def __init__(self, coeffs: dict, const: np.ndarray):
        self.coeffs = coeffs
        self.const = np.asarray(const, dtype=float)
        if self.const.ndim != 1:
            raise CanonError("affine constant must be 1-D")
        for v, mat in coeffs.items():
            if mat.shape != (self.const.shape[0], v.dim):
                raise CanonError(
                    f"coefficient shape {mat.shape} mismatches ({self.const.shape[0]}, {v.dim})")

    @property
    def rows(self) -> int:
        return self.const.shape[0]

    def copy(self) -> "Affine":
        return Affine({v: m.copy() for v, m in self.coeffs.items()}, self.const.copy())

    # -- algebra -----------------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Affine):
            if other.rows != self.rows:
                raise CanonError("affine row mismatch in addition")
            coeffs = {v: m.copy() for v, m in self.coeffs.items()}
            for v, m in other.coeffs.items():
                coeffs[v] = coeffs[v] + m if v in coeffs else m.copy()
            return Affine(coeffs, self.const + other.const)
        other = np.broadcast_to(np.asarray(other, dtype=float), (self.rows,))
        return Affine({v: m.copy() for v, m in self.coeffs.items()}, self.const + other)

    __radd__ = __add__

    def __neg__(self):
        return Affine({v: -m for v, m in self.coeffs.items()}, -self.const)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Affine) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        scalar = float(scalar)
        return Affine({v: scalar * m for v, m in self.coeffs.items()}, scalar * self.const)

    __rmul__ = __mul__

    def matmul(self, matrix) -> "Affine":
        """Left-multiply: matrix @ self."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix[None, :]
        if matrix.shape[1] != self.rows:
            raise CanonError("matmul dimension mismatch")
        return Affine({v: matrix @ m for v, m in self.coeffs.items()}, matrix @ self.const)

    def __getitem__(self, idx):
        if isinstance(idx, int):
            idx = slice(idx, idx + 1)
        if isinstance(idx, slice):
            return Affine({v: m[idx] for v, m in self.coeffs.items()}, self.const[idx])
        idx = np.asarray(idx)
        return Affine({v: m[idx] for v, m in self.coeffs.items()}, self.const[idx])

    def sum(self) -> "Affine":
        return Affine({v: m.sum(axis=0, keepdims=True) for v, m in self.coeffs.items()},
                      np.array([self.const.sum()]))

    def scale_rows(self, weights) -> "Affine":
        weights = np.broadcast_to(np.asarray(weights, dtype=float), (self.rows,))
        return Affine({v: weights[:, None] * m for v, m in self.coeffs.items()},
                      weights * self.const)

    @staticmethod
    def vstack(parts) -> "Affine":
        parts = list(parts)
        rows = sum(p.rows for p in parts)
        const = np.concatenate([p.const for p in parts])
        coeffs: dict = {}
        offset = 0
        for p in parts:
            for v, m in p.coeffs.items():
                if v not in coeffs:
                    coeffs[v] = np.zeros((rows, v.dim))
                coeffs[v][offset:offset + p.rows] = m
            offset += p.rows
        return Affine(coeffs, const)

    # -- evaluation --------------------------------------------------------
    def value(self, assign: dict) -> np.ndarray:
        out = self.const.copy()
        for v, m in self.coeffs.items():
            out += m @ assign[v]
        return out

    def variables(self):
        """Variables referenced, in insertion order (deterministic)."""
        return list(self.coeffs.keys())


def var_expr(v: Var) -> Affine:
    return Affine({v: np.eye(v.dim)}, np.zeros(v.dim))


def constant(values) -> Affine:
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return Affine({}, values)
