"""Offline comparator ``argmin_{x in S_T} sum_t f_t(x)`` and a brute-force grid check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import OracleError
from .geometry import DEFAULT_TOL, Ball, Box, FeasibleRegion, project_region
from .problem import Instance, LinearLoss, MaxAffineLoss, QuadraticLoss

__all__ = ["OracleResult", "offline_optimum", "grid_search_optimum", "total_loss"]


@dataclass
class OracleResult:
    x_star: np.ndarray
    value: float
    stationarity_residual: float
    iterations: int
    vi_residual: float = 0.0


class _Objective:
    """F(x) = sum_t f_t(x) with the linear and quadratic parts folded together."""

    def __init__(self, inst: Instance):
        d = inst.dimension
        self.curv = 0.0
        self.lin = np.zeros(d)
        self.const = 0.0
        self.pieces: list[MaxAffineLoss] = []
        for f in inst.losses:
            if isinstance(f, LinearLoss):
                self.lin += f.slope
            elif isinstance(f, QuadraticLoss):
                self.curv += f.mu
                self.lin -= f.mu * f.center
                self.const += 0.5 * f.mu * float(f.center @ f.center)
            elif isinstance(f, MaxAffineLoss):
                self.pieces.append(f)
            else:
                raise TypeError(f"unsupported loss {type(f).__name__}")

    @property
    def smooth(self) -> bool:
        return not self.pieces

    def grad(self, x: np.ndarray) -> np.ndarray:
        g = self.curv * x + self.lin
        for f in self.pieces:
            g = g + f.subgrad(x)
        return g

    def values(self, X: np.ndarray) -> np.ndarray:
        """F at every row of ``X``."""
        out = 0.5 * self.curv * np.einsum("nd,nd->n", X, X) + X @ self.lin + self.const
        for f in self.pieces:
            out = out + np.max(X @ f.slopes.T + f.intercepts, axis=1)
        return out

    def directional(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """One-sided directional derivatives F'(x; u_m) for each row u_m."""
        out = u @ (self.curv * x + self.lin)
        for f in self.pieces:
            vals = f.slopes @ x + f.intercepts
            active = vals >= vals.max() - 1e-12 * (1.0 + abs(vals.max()))
            out = out + np.max(u @ f.slopes[active].T, axis=1)
        return out


def total_loss(inst: Instance, x: np.ndarray) -> float:
    return math.fsum(f.value(x) for f in inst.losses)


def _sample_feasible(inst: Instance, region: FeasibleRegion, x_star: np.ndarray, n: int,
                     rng: np.random.Generator) -> np.ndarray:
    d = inst.dimension
    base = inst.base
    found: list[np.ndarray] = []
    for _ in range(20):
        if isinstance(base, Box):
            cand = rng.uniform(base.lo_arr, base.hi_arr, size=(4 * n, d))
        else:
            v = rng.standard_normal((4 * n, d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            cand = base.c + base.radius * v * rng.uniform(size=(4 * n, 1)) ** (1.0 / d)
        found.extend(cand[region.residuals_many(cand) <= 0.0])
        if len(found) >= n:
            break
    pts = np.array(found[:n]).reshape(-1, d)
    if pts.shape[0] < n:
        # convex combinations of feasible points stay feasible
        w = rng.uniform(size=(n - pts.shape[0], 1))
        pts = np.vstack([pts, w * inst.anchor + (1 - w) * x_star])
    return pts


def _vi_residual(obj: _Objective, x: np.ndarray, pts: np.ndarray) -> float:
    dirs = pts - x
    norms = np.linalg.norm(dirs, axis=1)
    keep = norms > 1e-12
    if not np.any(keep):
        return 0.0
    u = dirs[keep] / norms[keep, None]
    worst = float(np.min(obj.directional(x, u)))
    scale = max(1.0, float(np.linalg.norm(obj.grad(x))))
    return max(0.0, -worst) / scale


def offline_optimum(inst: Instance, tol: float = 1e-8, max_iters: int = 1_000_000,
                    proj_tol: float = DEFAULT_TOL, n_check: int = 1000) -> OracleResult:
    """Minimize the total loss over the final feasible set S_T.

    Projected (sub)gradient descent from the anchor: steps ``1/(M k)`` when the
    total curvature ``M`` is positive, a constant step of length ``D`` along
    the normalized gradient for purely linear totals, and ``D/(G sqrt k)``
    steps with iterate averaging when max-affine pieces make the total
    nonsmooth.

    The stationarity residual is the projected-gradient mapping measured in
    distance units, ``||x - Proj(x - grad/L)||`` with ``L = M`` (or
    ``||grad||/D`` for linear totals); for nonsmooth totals it is the
    variational-inequality residual against ``n_check`` random feasible points.

    Raises:
        OracleError: when ``max_iters`` is exhausted above ``tol``.
    """
    region = inst.final_region()
    obj = _Objective(inst)
    rng = np.random.default_rng(inst.seed ^ 0x5DEECE66D)
    x = project_region(inst.anchor, region, proj_tol)
    D = inst.D

    def mapping(x: np.ndarray) -> float:
        g = obj.grad(x)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            return 0.0
        L = obj.curv if obj.curv > 0 else gn / D
        return float(np.linalg.norm(x - project_region(x - g / L, region, proj_tol)))

    iters = 0
    if obj.smooth:
        res = mapping(x)
        while res > tol and iters < max_iters:
            iters += 1
            g = obj.grad(x)
            if obj.curv > 0:
                step = 1.0 / (obj.curv * iters)
            else:
                step = D / float(np.linalg.norm(g))
            x = project_region(x - step * g, region, proj_tol)
            res = mapping(x)
        pts = _sample_feasible(inst, region, x, n_check, rng)
        vi = _vi_residual(obj, x, pts)
        if res > tol:
            raise OracleError(f"offline optimum not reached after {iters} iterations "
                              f"(residual {res:.3g})", x, total_loss(inst, x), res)
        return OracleResult(x, total_loss(inst, x), res, iters, vi)

    G = sum(f.lipschitz(inst.base) for f in inst.losses) or 1.0
    pts = _sample_feasible(inst, region, x, n_check, rng)
    avg = x.copy()
    weight = 0.0
    best_x, best_val = x.copy(), float(obj.values(x[None, :])[0])
    res = _vi_residual(obj, x, pts)
    while res > tol and iters < max_iters:
        iters += 1
        g = obj.grad(x)
        step = 1.0 / (obj.curv * iters) if obj.curv > 0 else D / (G * math.sqrt(iters))
        x = project_region(x - step * g, region, proj_tol)
        avg = (weight * avg + x) / (weight + 1.0)
        weight += 1.0
        if iters % 256 == 0 or iters == max_iters:
            for cand in (x, avg):
                val = float(obj.values(cand[None, :])[0])
                if val < best_val:
                    best_x, best_val = cand.copy(), val
            res = _vi_residual(obj, best_x, pts)
    if res > tol:
        raise OracleError(f"nonsmooth offline optimum not certified after {iters} iterations "
                          f"(residual {res:.3g})", best_x, total_loss(inst, best_x), res)
    return OracleResult(best_x, total_loss(inst, best_x), res, iters, res)


def grid_search_optimum(inst: Instance, resolution: float,
                        window: tuple | None = None) -> tuple[np.ndarray, float]:
    """Best feasible point of a regular grid over the base set (d <= 2 only).

    ``window=(lo, hi)`` restricts the scan to a sub-box of the base set's
    bounding box, so a coarse scan can be followed by a fine one around its
    winner.

    Raises:
        ValueError: for d > 2 or a nonpositive resolution.
        OracleError: if no grid point is feasible.
    """
    d = inst.dimension
    if d > 2:
        raise ValueError("grid search is limited to d <= 2")
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    base = inst.base
    if isinstance(base, Ball):
        lo, hi = base.c - base.radius, base.c + base.radius
    else:
        lo, hi = base.lo_arr, base.hi_arr
    if window is not None:
        lo = np.maximum(lo, np.asarray(window[0], dtype=float))
        hi = np.minimum(hi, np.asarray(window[1], dtype=float))
        if np.any(hi < lo):
            raise ValueError("window does not meet the base set")
    axes = [np.arange(l, h + 0.5 * resolution, resolution) for l, h in zip(lo, hi)]
    axes = [np.minimum(a, h) for a, h in zip(axes, hi)]
    region = inst.final_region()
    obj = _Objective(inst)

    best_val, best_x = math.inf, None
    first = axes[0]
    rest = axes[1] if d == 2 else None
    chunk = max(1, 2_000_000 // (rest.size if rest is not None else 1))
    for start in range(0, first.size, chunk):
        a = first[start:start + chunk]
        if rest is None:
            pts = a[:, None]
        else:
            A, B = np.meshgrid(a, rest, indexing="ij")
            pts = np.column_stack([A.ravel(), B.ravel()])
        ok = region.residuals_many(pts) <= 0.0
        if not np.any(ok):
            continue
        pts = pts[ok]
        vals = obj.values(pts)
        m = int(np.argmin(vals))
        if vals[m] < best_val:
            best_val, best_x = float(vals[m]), pts[m].copy()
    if best_x is None:
        raise OracleError("no feasible grid point; refine the resolution", inst.anchor, math.nan, math.nan)
    return best_x, total_loss(inst, best_x)
