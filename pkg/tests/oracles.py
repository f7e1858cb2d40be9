"""Independent oracles used to freeze expected values.

Everything here evaluates with plain numpy, no solver machinery: a
multi-level dense-grid maximizer for small convex trading problems, direct
cost/metric formulas, and a sort-based sum-of-k-largest. These stay
independent of the code paths they check.
"""

from __future__ import annotations

import numpy as np


def grid_refine_maximize(objective, lo, hi, points_per_dim=15, levels=5):
    """Maximize a vectorized objective over a box by iterative grid refinement.

    ``objective`` maps an (m, n) array of points to (m,) values (-inf marks
    infeasible points). Suitable for concave objectives: each level zooms
    into a margin of two cells around the incumbent. Returns (best_x, best_value).
    """
    lo = np.asarray(lo, dtype=float).copy()
    hi = np.asarray(hi, dtype=float).copy()
    n = lo.shape[0]
    best_x, best_val = None, -np.inf
    for _ in range(levels):
        axes = [np.linspace(lo[i], hi[i], points_per_dim) for i in range(n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = objective(pts)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_x = pts[k].copy()
        if best_x is None:
            raise ValueError("no feasible grid point")
        step = (hi - lo) / (points_per_dim - 1)
        lo = best_x - 2.0 * step
        hi = best_x + 2.0 * step
    return best_x, best_val


def tcost_direct(x, a, b, sigma, volume, c):
    """Transaction cost model evaluated longhand."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(a * np.abs(x) + b * sigma * np.abs(x) ** 1.5 / np.sqrt(volume)
                        + c * x))


def hcost_direct(w_plus_assets, s, f=None, d=None):
    w = np.asarray(w_plus_assets, dtype=float)
    total = float(np.sum(s * np.maximum(-w, 0.0)))
    if f is not None:
        total += float(np.sum(f * w))
    if d is not None:
        total -= float(np.sum(d * w))
    return total


def sum_k_largest_sorted(values, k):
    """Sort-based sum of the k largest (fractional k interpolates)."""
    srt = sorted(values, reverse=True)
    whole = int(np.floor(k))
    total = sum(srt[:whole])
    frac = k - whole
    if frac > 0 and whole < len(srt):
        total += frac * srt[whole]
    return total


class SpoInstance:
    """A small random single-period problem with a direct objective evaluator.

    Variables are the asset trades; cash is eliminated by 1'z = 0. The
    objective is r'z - gt*tcost - gh*hcost - gr*quadratic risk, with optional
    long-only and leverage constraints enforced by masking.
    """

    def __init__(self, n, rng, long_only=True, leverage=None, with_costs=True):
        self.n = n
        w_assets = rng.dirichlet(np.ones(n + 1))[:n]
        self.w = np.concatenate([w_assets, [1.0 - w_assets.sum()]])
        self.r = np.concatenate([rng.normal(0.0, 0.01, n), [1e-5]])
        A = rng.normal(0.0, 1.0, (n + 1, n + 1))
        sigma = A @ A.T / (n + 1)
        sigma[-1, :] = 0.0
        sigma[:, -1] = 0.0
        self.sigma = sigma
        self.gamma_risk = float(rng.uniform(0.5, 5.0))
        self.gamma_trade = float(rng.uniform(0.5, 2.0)) if with_costs else 0.0
        self.gamma_hold = float(rng.uniform(0.5, 2.0)) if with_costs else 0.0
        self.a = rng.uniform(0.0, 0.002, n) if with_costs else np.zeros(n)
        self.b = rng.uniform(0.0, 1.5, n) if with_costs else np.zeros(n)
        self.sig_t = rng.uniform(0.005, 0.03, n)
        self.vol_norm = rng.uniform(0.5, 20.0, n)
        self.c = rng.uniform(-0.0005, 0.0005, n) if with_costs else np.zeros(n)
        self.s = rng.uniform(0.0, 0.001, n) if with_costs else np.zeros(n)
        self.long_only = long_only
        self.leverage = leverage

    def objective_batch(self, Z):
        """Vectorized objective over (m, n) asset-trade points; -inf if infeasible."""
        Z = np.atleast_2d(Z)
        z_cash = -Z.sum(axis=1)
        post_assets = self.w[:-1] + Z
        post_cash = self.w[-1] + z_cash
        ret = Z @ self.r[:-1] + z_cash * self.r[-1]
        tc = (np.abs(Z) @ self.a
              + (np.abs(Z) ** 1.5) @ (self.b * self.sig_t / np.sqrt(self.vol_norm))
              + Z @ self.c)
        hc = np.maximum(-post_assets, 0.0) @ self.s
        v = np.column_stack([post_assets, post_cash])
        risk = np.einsum("mi,ij,mj->m", v, self.sigma, v)
        obj = ret - self.gamma_trade * tc - self.gamma_hold * hc - self.gamma_risk * risk
        feasible = np.ones(Z.shape[0], dtype=bool)
        if self.long_only:
            feasible &= (post_assets >= -1e-12).all(axis=1) & (post_cash >= -1e-12)
        if self.leverage is not None:
            feasible &= np.abs(post_assets).sum(axis=1) <= self.leverage + 1e-12
        return np.where(feasible, obj, -np.inf)

    def objective_one(self, z_assets):
        return float(self.objective_batch(np.asarray(z_assets)[None, :])[0])

    def brute_force(self, points_per_dim=13, levels=6):
        zmax = 1.0
        return grid_refine_maximize(self.objective_batch,
                                    lo=-zmax * np.ones(self.n),
                                    hi=zmax * np.ones(self.n),
                                    points_per_dim=points_per_dim, levels=levels)
