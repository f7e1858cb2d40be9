"""Lowering of convex terms and constraints to conic standard form.

Target form:  minimize (1/2) x'Px + q'x + r
              s.t.      A x + s = b,  s in K
with K a product of a zero cone (equalities), the nonnegative orthant, and
second-order cones. Nonsmooth terms get epigraph variables; the 3/2-power
impact term uses the rational-power tower of two rotated second-order cones
per scalar, so no exponential or power cone is required.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from ..errors import CanonError
from .expr import Affine, Var, constant, var_expr
from . import terms as T


@dataclass
class ConvexProblem:
    """Canonical conic program plus the provenance needed to verify it."""

    variables: list            # ordered Vars (user vars then auxiliaries)
    offsets: dict              # Var -> column offset
    n_cols: int
    P: sparse.csc_matrix       # upper-triangular quadratic part
    q: np.ndarray
    A: sparse.csc_matrix
    b: np.ndarray
    cone_dims: dict            # {"zero": m_eq, "nonneg": m_in, "soc": [d1, ...]}
    obj_const: float
    terms: list
    constraints: list
    stats: dict

    def split(self, x: np.ndarray) -> dict:
        """Map a flat canonical solution vector to per-variable values."""
        return {v: x[self.offsets[v]:self.offsets[v] + v.dim] for v in self.variables}

    def objective_value(self, x: np.ndarray) -> float:
        # P stores the upper triangle of the symmetric quadratic matrix:
        # (1/2) x'P_sym x = x'P_triu x - (1/2) sum_i P_ii x_i^2
        quad = float(x @ (self.P @ x)) - 0.5 * float(self.P.diagonal() @ (x * x))
        return quad + float(self.q @ x) + self.obj_const

    def dump(self, path) -> None:
        """Write the canonical blocks as text, 17 significant digits."""
        g = lambda x: "%.17g" % x
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# canonical conic program: min 0.5 x'Px + q'x + r, Ax + s = b, s in K\n")
            fh.write("variables\n")
            for v in self.variables:
                fh.write(f"  {v.name} dim={v.dim} offset={self.offsets[v]}\n")
            fh.write(f"objective_constant {g(self.obj_const)}\n")
            coo = self.P.tocoo()
            fh.write(f"P {self.n_cols} {self.n_cols} nnz={coo.nnz}\n")
            for i, j, val in zip(coo.row, coo.col, coo.data):
                fh.write(f"  {i} {j} {g(val)}\n")
            fh.write(f"q nnz={np.count_nonzero(self.q)}\n")
            for i in np.nonzero(self.q)[0]:
                fh.write(f"  {i} {g(self.q[i])}\n")
            coo = self.A.tocoo()
            fh.write(f"A {self.A.shape[0]} {self.A.shape[1]} nnz={coo.nnz}\n")
            for i, j, val in zip(coo.row, coo.col, coo.data):
                fh.write(f"  {i} {j} {g(val)}\n")
            fh.write("b\n")
            for i, val in enumerate(self.b):
                fh.write(f"  {i} {g(val)}\n")
            fh.write(f"cones zero={self.cone_dims['zero']} nonneg={self.cone_dims['nonneg']} "
                     f"soc={','.join(str(d) for d in self.cone_dims['soc'])}\n")


class _Builder:
    def __init__(self):
        self.variables: list[Var] = []
        self._seen = set()
        self.eq_rows: list[Affine] = []
        self.ineq_rows: list[Affine] = []      # each row block: expr <= 0
        self.soc_blocks: list[Affine] = []     # stacked affine, row0 >= ||rows1:||
        self.quad_triplets: list = []          # (var_a, var_b, dense block) for P
        self.lin_obj: list[Affine] = []        # scalar affines summed into q
        self.obj_const = 0.0
        self.stats = {"aux_vars": 0, "power_blocks": 0, "soc_blocks": 0,
                      "hinge_vars": 0, "abs_vars": 0}
        self._aux_counter = 0

    # -- variables ----------------------------------------------------------
    def register(self, affine: Affine) -> None:
        for v in affine.variables():
            if v not in self._seen:
                self._seen.add(v)
                self.variables.append(v)

    def new_var(self, dim: int, tag: str) -> Var:
        self._aux_counter += 1
        v = Var(f"_{tag}{self._aux_counter}", dim)
        self._seen.add(v)
        self.variables.append(v)
        self.stats["aux_vars"] += dim
        return v

    # -- row emission --------------------------------------------------------
    def add_eq(self, affine: Affine) -> None:
        self.register(affine)
        self.eq_rows.append(affine)

    def add_leq(self, affine: Affine) -> None:
        """affine <= 0 elementwise."""
        self.register(affine)
        self.ineq_rows.append(affine)

    def add_soc(self, stacked: Affine) -> None:
        """stacked[0] >= || stacked[1:] ||_2."""
        self.register(stacked)
        self.soc_blocks.append(stacked)
        self.stats["soc_blocks"] += 1

    def add_quad(self, expr: Affine, M: np.ndarray, gamma: float) -> None:
        """gamma * expr' M expr into P/q/const (M PSD)."""
        self.register(expr)
        if gamma == 0.0:
            return
        items = list(expr.coeffs.items())
        for ia, (va, Ja) in enumerate(items):
            for vb, Jb in items[ia:]:
                block = 2.0 * gamma * (Ja.T @ M @ Jb)
                self.quad_triplets.append((va, vb, block))
        if np.any(expr.const):
            Mc = M @ expr.const
            for va, Ja in items:
                self.lin_obj.append(Affine({va: (2.0 * gamma * (Mc @ Ja))[None, :]},
                                           np.zeros(1)))
            self.obj_const += gamma * float(expr.const @ Mc)

    def add_linear_objective(self, affine: Affine) -> None:
        """Add sum(affine) to the objective."""
        self.register(affine)
        self.lin_obj.append(affine.sum())

    # -- reusable gadgets ----------------------------------------------------
    def abs_epigraph(self, expr: Affine, mask=None) -> tuple:
        """Aux t >= |expr_i| for selected rows; returns (t_var, row_index)."""
        if mask is None:
            mask = np.ones(expr.rows, dtype=bool)
        rows = np.nonzero(mask)[0]
        if rows.size == 0:
            return None, rows
        t = self.new_var(rows.size, "abs")
        self.stats["abs_vars"] += rows.size
        sub = expr[rows]
        te = var_expr(t)
        self.add_leq(sub - te)
        self.add_leq(-sub - te)
        return t, rows

    def hinge_epigraph(self, expr: Affine, mask=None) -> tuple:
        """Aux t >= (expr_i)_+ for selected rows."""
        if mask is None:
            mask = np.ones(expr.rows, dtype=bool)
        rows = np.nonzero(mask)[0]
        if rows.size == 0:
            return None, rows
        t = self.new_var(rows.size, "hinge")
        self.stats["hinge_vars"] += rows.size
        te = var_expr(t)
        self.add_leq(expr[rows] - te)
        self.add_leq(-te)
        return t, rows

    def power_epigraph(self, expr: Affine, mask) -> tuple:
        """Aux s_i >= |expr_i|^(3/2) for selected rows via the SOC tower."""
        rows = np.nonzero(mask)[0]
        if rows.size == 0:
            return None, rows
        u, _ = self.abs_epigraph(expr, mask)
        s = self.new_var(rows.size, "pow")
        w = self.new_var(rows.size, "powaux")
        ue, se, we = var_expr(u), var_expr(s), var_expr(w)
        for i in range(rows.size):
            # u^2 <= s*w  and  w^2 <= u, so s >= u^(3/2) at the optimum
            self.add_soc(Affine.vstack([se[i] + we[i], se[i] - we[i], 2.0 * ue[i]]))
            self.add_soc(Affine.vstack([ue[i] + 1.0, ue[i] - 1.0, 2.0 * we[i]]))
            self.stats["power_blocks"] += 1
        return s, rows

    def quad_upper(self, expr: Affine, factor: np.ndarray) -> Var:
        """Aux scalar t >= ||factor @ expr||^2 via one SOC block."""
        t = self.new_var(1, "quadepi")
        te = var_expr(t)
        Lx = expr.matmul(factor)
        self.add_soc(Affine.vstack([te + 1.0, te - 1.0, 2.0 * Lx]))
        return t

    # -- assembly -------------------------------------------------------------
    def assemble(self, terms_in, constraints_in) -> ConvexProblem:
        offsets, total = {}, 0
        for v in self.variables:
            offsets[v] = total
            total += v.dim

        def rows_to_coo(affines, row_offset, negate):
            data, ri, ci, consts = [], [], [], []
            r = row_offset
            for a in affines:
                for v, mat in a.coeffs.items():
                    nzr, nzc = np.nonzero(mat)
                    data.append((-mat if negate else mat)[nzr, nzc])
                    ri.append(nzr + r)
                    ci.append(nzc + offsets[v])
                consts.append(a.const)
                r += a.rows
            return data, ri, ci, consts, r

        # Order: zero cone rows, nonneg rows, soc rows.
        data, ri, ci, bs = [], [], [], []
        # equalities: A x = b  ->  A x + s = b, s in {0}; rows as expr == 0
        d, r_, c_, cs, r_end = rows_to_coo(self.eq_rows, 0, negate=False)
        data += d; ri += r_; ci += c_; bs += [-c for c in cs]
        m_eq = r_end
        # inequalities: expr <= 0  ->  s = -expr >= 0: A = coeffs, b = -const
        d, r_, c_, cs, r_end = rows_to_coo(self.ineq_rows, m_eq, negate=False)
        data += d; ri += r_; ci += c_; bs += [-c for c in cs]
        m_in = r_end - m_eq
        # soc: s = stacked affine in SOC: A = -coeffs, b = const
        d, r_, c_, cs, r_end = rows_to_coo(self.soc_blocks, m_eq + m_in, negate=True)
        data += d; ri += r_; ci += c_; bs += cs
        soc_dims = [blk.rows for blk in self.soc_blocks]

        m_total = r_end
        if data:
            A = sparse.csc_matrix(
                (np.concatenate(data), (np.concatenate(ri), np.concatenate(ci))),
                shape=(m_total, total))
        else:
            A = sparse.csc_matrix((m_total, total))
        b = np.concatenate(bs) if bs else np.zeros(0)

        # P upper triangular: P[i,j] (i <= j) is the (i,j) entry of the full
        # symmetric quadratic matrix; diagonal blocks are symmetric already.
        pdata, pri, pci = [], [], []
        for va, vb, block in self.quad_triplets:
            oa, ob = offsets[va], offsets[vb]
            nzr, nzc = np.nonzero(block)
            if va is vb:
                keep = nzr <= nzc
                pdata.append(block[nzr[keep], nzc[keep]])
                pri.append(nzr[keep] + oa)
                pci.append(nzc[keep] + oa)
            else:
                swap = oa > ob
                pdata.append(block[nzr, nzc])
                pri.append((nzc + ob) if swap else (nzr + oa))
                pci.append((nzr + oa) if swap else (nzc + ob))
        if pdata:
            P = sparse.csc_matrix(
                (np.concatenate(pdata), (np.concatenate(pri), np.concatenate(pci))),
                shape=(total, total))
            P.sum_duplicates()
        else:
            P = sparse.csc_matrix((total, total))

        q = np.zeros(total)
        for a in self.lin_obj:
            for v, mat in a.coeffs.items():
                q[offsets[v]:offsets[v] + v.dim] += mat[0]
            self.obj_const += float(a.const[0])

        return ConvexProblem(
            variables=self.variables,
            offsets=offsets,
            n_cols=total,
            P=P,
            q=q,
            A=A,
            b=b,
            cone_dims={"zero": m_eq, "nonneg": m_in, "soc": soc_dims},
            obj_const=self.obj_const,
            terms=list(terms_in),
            constraints=list(constraints_in),
            stats=dict(self.stats),
        )


# ---------------------------------------------------------------------------
# Term lowering
# ---------------------------------------------------------------------------

def _lower_linear(b: _Builder, t: T.LinearTerm):
    b.add_linear_objective(t.expr)


def _lower_abs(b: _Builder, t: T.AbsTerm):
    tv, rows = b.abs_epigraph(t.expr, mask=t.weights > 0)
    if tv is not None:
        b.add_linear_objective(var_expr(tv).scale_rows(t.weights[rows]))


def _lower_hinge(b: _Builder, t: T.HingeTerm):
    tv, rows = b.hinge_epigraph(t.expr, mask=t.weights > 0)
    if tv is not None:
        b.add_linear_objective(var_expr(tv).scale_rows(t.weights[rows]))


def _lower_power(b: _Builder, t: T.PowerTerm):
    sv, rows = b.power_epigraph(t.expr, mask=t.weights > 0)
    if sv is not None:
        b.add_linear_objective(var_expr(sv).scale_rows(t.weights[rows]))


def _lower_quad(b: _Builder, t: T.QuadTerm):
    b.add_quad(t.expr, t.matrix, t.gamma)


def _lower_factor_quad(b: _Builder, t: T.FactorQuadTerm):
    if t.gamma == 0.0:
        b.register(t.expr)
        return
    k = t.loadings.shape[1]
    y = b.new_var(k, "factor")
    b.add_eq(var_expr(y) - t.expr.matmul(t.loadings.T))
    b.add_quad(var_expr(y), t.factor_cov, t.gamma)
    b.add_quad(t.expr, np.diag(t.idio), t.gamma)


def _lower_max_quad(b: _Builder, t: T.MaxQuadTerm):
    if t.gamma == 0.0:
        b.register(t.expr)
        return
    up = b.new_var(1, "wcrisk")
    ue = var_expr(up)
    for L in t.factors:
        Lx = t.expr.matmul(L)
        b.add_soc(Affine.vstack([ue + 1.0, ue - 1.0, 2.0 * Lx]))
    b.add_linear_objective(ue.scale_rows([t.gamma]))


def _lower_hinge_quad(b: _Builder, t: T.HingeQuadTerm):
    if t.gamma == 0.0:
        b.register(t.expr)
        return
    u = b.quad_upper(t.expr, t.factor)
    h, _ = b.hinge_epigraph(var_expr(u) - t.threshold)
    b.add_linear_objective(var_expr(h).scale_rows([t.gamma]))


def _lower_exp_quad(b: _Builder, t: T.ExpQuadTerm):
    if t.gamma == 0.0:
        b.register(t.expr)
        return
    u = b.quad_upper(t.expr, t.factor)
    g = b.new_var(1, "expepi")
    slopes, intercepts = t.pieces
    ue, ge = var_expr(u), var_expr(g)
    # g >= slope_j * u + intercept_j for every chord
    for sl, ic in zip(slopes, intercepts):
        b.add_leq(ue.scale_rows([sl]) + ic - ge)
    b.add_linear_objective(ge.scale_rows([t.gamma]))


def _lower_squared_abs(b: _Builder, t: T.SquaredAbsTerm):
    if t.gamma == 0.0 or t.kappa == 0.0:
        b.register(t.expr)
        return
    m, rows = b.abs_epigraph(t.expr, mask=t.sigma > 0)
    if m is None:
        return
    s = b.new_var(1, "l1sq")
    b.add_eq(var_expr(s) - var_expr(m).scale_rows(t.sigma[rows]).sum())
    b.add_quad(var_expr(s), np.array([[1.0]]), t.gamma * t.kappa)


def _lower_soft(b: _Builder, t: T.SoftConstraintTerm):
    eps = b.new_var(t.constraint.relax_dim(), "slack")
    ee = var_expr(eps)
    b.add_leq(-ee)
    _lower_constraint(b, t.constraint, relax=ee)
    b.add_linear_objective(ee.scale_rows(t.gamma))


_TERM_LOWERERS = {
    T.LinearTerm: _lower_linear,
    T.AbsTerm: _lower_abs,
    T.HingeTerm: _lower_hinge,
    T.PowerTerm: _lower_power,
    T.QuadTerm: _lower_quad,
    T.FactorQuadTerm: _lower_factor_quad,
    T.MaxQuadTerm: _lower_max_quad,
    T.HingeQuadTerm: _lower_hinge_quad,
    T.ExpQuadTerm: _lower_exp_quad,
    T.SquaredAbsTerm: _lower_squared_abs,
    T.SoftConstraintTerm: _lower_soft,
}


# ---------------------------------------------------------------------------
# Constraint lowering (relax, when given, is an epsilon expression >= 0)
# ---------------------------------------------------------------------------

def _lower_constraint(b: _Builder, con, relax: Affine | None = None):
    if isinstance(con, T.EqZero):
        if relax is None:
            b.add_eq(con.expr)
        else:
            b.add_leq(con.expr - relax)
            b.add_leq(-con.expr - relax)
    elif isinstance(con, T.LeqZero):
        b.add_leq(con.expr if relax is None else con.expr - relax)
    elif isinstance(con, T.AbsLeq):
        ub = con.bound if relax is None else con.bound + relax
        b.add_leq(con.expr - ub)
        b.add_leq(-con.expr - ub)
    elif isinstance(con, T.NormOneLeq):
        tv, rows = b.abs_epigraph(con.expr)
        total = var_expr(tv).sum() if tv is not None else constant([0.0])
        bound = con.bound if relax is None else con.bound + relax
        b.add_leq(total - bound)
    elif isinstance(con, T.SumKLargestLeq):
        theta = b.new_var(1, "kmax")
        shifted = con.expr - var_expr(theta).matmul(np.ones((con.expr.rows, 1)))
        h, _ = b.hinge_epigraph(shifted)
        lhs = var_expr(theta).scale_rows([con.k]) + var_expr(h).sum() - con.bound
        b.add_leq(lhs if relax is None else lhs - relax)
    elif isinstance(con, T.CostBudgetLeq):
        lhs = con.linear - con.bound
        for w, e in con.abs_parts:
            tv, rows = b.abs_epigraph(e, mask=w > 0)
            if tv is not None:
                lhs = lhs + var_expr(tv).scale_rows(w[rows]).sum()
        for w, e in con.power_parts:
            sv, rows = b.power_epigraph(e, mask=w > 0)
            if sv is not None:
                lhs = lhs + var_expr(sv).scale_rows(w[rows]).sum()
        for w, e in con.hinge_parts:
            hv, rows = b.hinge_epigraph(e, mask=w > 0)
            if hv is not None:
                lhs = lhs + var_expr(hv).scale_rows(w[rows]).sum()
        b.add_leq(lhs if relax is None else lhs - relax)
    else:
        raise CanonError(f"unknown constraint kind {type(con).__name__}")


def canonicalize(terms, constraints) -> ConvexProblem:
    """Lower a term/constraint collection to the canonical conic program."""
    b = _Builder()
    for t in terms:
        lowerer = _TERM_LOWERERS.get(type(t))
        if lowerer is None:
            raise CanonError(f"unknown term kind {type(t).__name__}")
        lowerer(b, t)
    for con in constraints:
        if not isinstance(con, T.CONSTRAINT_KINDS):
            raise CanonError(f"unknown constraint kind {type(con).__name__}")
        _lower_constraint(b, con)
    return b.assemble(terms, constraints)
