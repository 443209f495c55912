"""Regret, CCV and movement metrics, closed-form bounds, and the lifted
self-contraction checks.

The lift pairs each iterate ``x_t`` with the tail sum ``R_t`` of the remaining
perturbation norms. Under the norm ``||(u, s)|| = ||u||_2 + |s|`` the lifted
sequence of an exact nested-projection run is self-contracted, which
:func:`check_self_contracted` verifies numerically.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .algorithm import RunTrace, StepSchedule, step_size
from .geometry import LiftedPoint

__all__ = [
    "MetricsReport",
    "SelfContractionReport",
    "regret",
    "ccv",
    "movement",
    "regret_bound_lemma",
    "regret_bound_theorem",
    "tail_perturbations",
    "lift",
    "check_self_contracted",
    "approx_contraction_residual",
    "movement_ratio",
    "scaling_fit",
    "compute_metrics",
]

# every run with T <= 512 rounds (T + 1 points) is checked exhaustively
EXHAUSTIVE_MAX_POINTS = 513
DEFAULT_TRIPLE_BUDGET = 1_000_000


def regret(trace: RunTrace, comparator_value: float) -> float:
    """Cumulative loss minus the comparator's; not clamped at zero."""
    if not trace.records:
        return 0.0
    return float(math.fsum(r.loss for r in trace.records)) - float(comparator_value)


def ccv(trace: RunTrace) -> float:
    return float(math.fsum(r.violation for r in trace.records))


def movement(trace: RunTrace) -> float:
    return float(math.fsum(r.move for r in trace.records))


def regret_bound_lemma(s: StepSchedule, D: float, G: float, H, T: int) -> float:
    """(D^2/2) sum_t (1/eta_t - 1/eta_{t-1} - H_t)^+ + (G^2/2) sum_t eta_t, with 1/eta_0 = 0.

    ``H`` is a per-round curvature list of length ``T`` or a scalar.
    """
    if T < 1:
        raise ValueError("the bound needs T >= 1")
    eta = np.array([step_size(s, t) for t in range(1, T + 1)])
    if np.any(eta <= 0):
        return math.inf
    H = np.broadcast_to(np.asarray(H, dtype=float), (T,))
    inv = 1.0 / eta
    inv_prev = np.concatenate([[0.0], inv[:-1]])
    curvature_term = np.maximum(inv - inv_prev - H, 0.0)
    return 0.5 * D * D * math.fsum(curvature_term) + 0.5 * G * G * math.fsum(eta)


def regret_bound_theorem(regime: str, D: float, G: float, mu: float | None, T: float) -> float:
    """``1.5 G D sqrt(T)`` (convex) or ``G^2/(2 mu) (1 + ln T)`` (strongly convex)."""
    if regime == "convex":
        return 1.5 * G * D * math.sqrt(T)
    if regime == "strongly-convex":
        if mu is None or not mu > 0:
            raise ValueError("strongly-convex bound needs mu > 0")
        return G * G / (2.0 * mu) * (1.0 + math.log(T))
    raise ValueError(f"unknown regime {regime!r}")


def tail_perturbations(e_norms: Sequence[float]) -> list[float]:
    """Suffix sums ``R_t = sum_{r >= t} e_r`` for t = 1..T+1 (``R_{T+1} = 0``)."""
    e = np.asarray(e_norms, dtype=float)
    if np.any(e < 0):
        raise ValueError("perturbation norms must be nonnegative")
    tails = np.zeros(e.size + 1)
    tails[:-1] = np.cumsum(e[::-1])[::-1]
    return tails.tolist()


def lift(trace: RunTrace) -> list[LiftedPoint]:
    xs = trace.iterates()
    tails = tail_perturbations([r.e_norm for r in trace.records])
    return [LiftedPoint(x, r) for x, r in zip(xs, tails)]


@dataclass
class SelfContractionReport:
    triples_checked: int
    max_violation: float
    exhaustive: bool


def _as_arrays(points) -> tuple[np.ndarray, np.ndarray]:
    if len(points) > 0 and isinstance(points[0], LiftedPoint):
        X = np.vstack([p.base for p in points])
        R = np.array([p.tail for p in points])
    else:
        X = np.atleast_2d(np.asarray(points, dtype=float))
        if X.shape[0] == 1 and len(points) > 1:
            X = X.T
        R = np.zeros(X.shape[0])
    return X, R


def _dist_rows(X: np.ndarray, R: np.ndarray, ks: np.ndarray, norm: str) -> np.ndarray:
    """Distances from each point ``ks[m]`` to every point, shape (len(ks), n)."""
    diff = X[ks][:, None, :] - X[None, :, :]
    base = np.sqrt(np.einsum("kjd,kjd->kj", diff, diff))
    dr = R[ks][:, None] - R[None, :]
    if norm == "oplus":
        return base + np.abs(dr)
    if norm == "euclidean":
        return np.sqrt(base * base + dr * dr)
    raise ValueError(f"unknown norm {norm!r}")


def _pair_dist(X, R, a, b, norm: str) -> np.ndarray:
    base = np.linalg.norm(X[a] - X[b], axis=-1)
    dr = R[a] - R[b]
    if norm == "oplus":
        return base + np.abs(dr)
    if norm == "euclidean":
        return np.sqrt(base * base + dr * dr)
    raise ValueError(f"unknown norm {norm!r}")


def _sample_triples(n: int, budget: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.sort(rng.integers(0, n, size=(budget, 3)), axis=1)


def check_self_contracted(points, norm: str = "euclidean", budget="auto",
                          seed: int = 0) -> SelfContractionReport:
    """Largest ``||A_k - A_j|| - ||A_k - A_i||`` over triples ``i <= j <= k``.

    Args:
        points: LiftedPoint sequence or an (n, d) array-like of plain points.
        norm: ``"euclidean"`` or ``"oplus"``.
        budget: ``"exhaustive"``, a number of sampled triples, or ``"auto"``
            (exhaustive up to 513 points, else 10^6 samples).
        seed: seed of the triple sample.

    The exhaustive check is exact: for a fixed ``k`` the largest violation is
    ``max_j (d_j - min_{i <= j} d_i)``, computed with a running minimum.
    """
    X, R = _as_arrays(points)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    if budget == "auto":
        budget = "exhaustive" if n <= EXHAUSTIVE_MAX_POINTS else DEFAULT_TRIPLE_BUDGET
    if budget == "exhaustive":
        worst = -math.inf
        block = max(1, 2_000_000 // n)
        for start in range(0, n, block):
            ks = np.arange(start, min(start + block, n))
            dist = _dist_rows(X, R, ks, norm)
            viol = dist - np.minimum.accumulate(dist, axis=1)
            viol[np.arange(n)[None, :] > ks[:, None]] = -np.inf
            worst = max(worst, float(np.max(viol)))
        return SelfContractionReport(n * (n + 1) * (n + 2) // 6, worst, True)

    budget = int(budget)
    tri = _sample_triples(n, budget, seed)
    i, j, k = tri[:, 0], tri[:, 1], tri[:, 2]
    viol = _pair_dist(X, R, k, j, norm) - _pair_dist(X, R, k, i, norm)
    return SelfContractionReport(budget, float(np.max(viol)), False)


def approx_contraction_residual(trace: RunTrace, budget="auto", seed: int = 0) -> float:
    """max over i < j < k of ``||x_j - x_k|| - ||x_i - x_k|| - sum_{r=i}^{j-1} ||e_r||``.

    Works on raw iterates (no lifting). Returns 0 when there are no triples.
    """
    X = trace.iterates()
    n = X.shape[0]
    if n < 3:
        return 0.0
    prefix = np.concatenate([[0.0], np.cumsum([r.e_norm for r in trace.records])])
    if budget == "auto":
        budget = "exhaustive" if n <= EXHAUSTIVE_MAX_POINTS else DEFAULT_TRIPLE_BUDGET
    if budget == "exhaustive":
        worst = -math.inf
        block = max(1, 2_000_000 // n)
        cols = np.arange(n)
        for start in range(2, n, block):
            ks = np.arange(start, min(start + block, n))
            diff = X[ks][:, None, :] - X[None, :, :]
            q = np.sqrt(np.einsum("kjd,kjd->kj", diff, diff)) - prefix[None, :]
            # best earlier index i < j: exclusive running minimum
            run_min = np.minimum.accumulate(q, axis=1)
            excl = np.concatenate([np.full((ks.size, 1), np.inf), run_min[:, :-1]], axis=1)
            viol = q - excl
            viol[(cols[None, :] >= ks[:, None]) | (cols[None, :] < 1)] = -np.inf
            worst = max(worst, float(np.max(viol)))
        return worst

    rng = np.random.default_rng(seed)
    tri = np.sort(rng.integers(0, n, size=(int(budget), 3)), axis=1)
    tri = tri[(tri[:, 0] < tri[:, 1]) & (tri[:, 1] < tri[:, 2])]
    if tri.size == 0:
        return 0.0
    i, j, k = tri[:, 0], tri[:, 1], tri[:, 2]
    lhs = np.linalg.norm(X[j] - X[k], axis=1)
    rhs = np.linalg.norm(X[i] - X[k], axis=1) + (prefix[j] - prefix[i])
    return float(np.max(lhs - rhs))


def movement_ratio(trace: RunTrace, D: float) -> float:
    """movement / (D + sum ||e_t||): an empirical lower estimate of the movement constant."""
    if not D > 0:
        raise ValueError("D must be positive")
    return movement(trace) / (D + math.fsum(r.e_norm for r in trace.records))


SCALING_MODELS = ("sqrtT", "logT", "loglog")


def scaling_fit(series: Sequence[tuple[float, float]], model: str) -> tuple[float, float]:
    """Least-squares slope and r^2 of ``value ~ a + b * feature(T)``.

    ``sqrtT`` uses sqrt(T), ``logT`` uses 1 + ln T, and ``loglog`` regresses
    ln(value) on ln(T) (all values must be positive).
    """
    if len(series) < 3:
        raise ValueError("a scaling fit needs at least 3 points")
    T = np.array([s[0] for s in series], dtype=float)
    y = np.array([s[1] for s in series], dtype=float)
    if np.any(np.diff(T) <= 0):
        raise ValueError("T values must be strictly increasing")
    if model == "sqrtT":
        x = np.sqrt(T)
    elif model == "logT":
        x = 1.0 + np.log(T)
    elif model == "loglog":
        if np.any(y <= 0):
            raise ValueError("loglog fit needs positive values")
        x, y = np.log(T), np.log(y)
    else:
        raise ValueError(f"unknown model {model!r}")
    xc = x - x.mean()
    yc = y - y.mean()
    slope = float(xc @ yc / (xc @ xc))
    resid = yc - slope * xc
    ss_res = float(resid @ resid)
    ss_tot = float(yc @ yc)
    scale = max(1.0, float(np.max(np.abs(y))))
    if ss_tot <= (1e-14 * scale) ** 2 * len(y):
        return slope if abs(slope) > 1e-14 * scale else 0.0, 1.0
    return slope, 1.0 - ss_res / ss_tot


@dataclass
class MetricsReport:
    T: int
    regret: float
    ccv: float
    movement: float
    sum_e_norm: float
    regret_bound_lemma: float
    regret_bound_theorem: float
    ccv_bound_form: float
    movement_ratio: float
    max_selfcontraction_violation: float
    comparator_value: float
    approx_contraction_residual: float = float("nan")
    triples_exhaustive: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def compute_metrics(trace: RunTrace, D: float, G: float, curvatures, schedule: StepSchedule,
                    comparator_value: float, budget="auto", seed: int = 0) -> MetricsReport:
    """Assemble every per-run metric and bound into a :class:`MetricsReport`."""
    T = trace.T
    mv = movement(trace)
    if T >= 1:
        lemma = regret_bound_lemma(schedule, D, G, curvatures, T)
        if schedule.kind == "sqrt-decay":
            theorem = regret_bound_theorem("convex", D, G, None, T)
        elif schedule.kind == "strongly-convex":
            theorem = regret_bound_theorem("strongly-convex", D, G, schedule.mu, T)
        else:
            theorem = math.nan
    else:
        lemma = theorem = 0.0
    if T >= 1:
        sc = check_self_contracted(lift(trace), "oplus", budget, seed)
        max_sc, exhaustive = sc.max_violation, sc.exhaustive
    else:
        max_sc, exhaustive = 0.0, True
    return MetricsReport(
        T=T,
        regret=regret(trace, comparator_value),
        ccv=ccv(trace),
        movement=mv,
        sum_e_norm=float(math.fsum(r.e_norm for r in trace.records)),
        regret_bound_lemma=lemma,
        regret_bound_theorem=theorem,
        ccv_bound_form=G * mv,
        movement_ratio=movement_ratio(trace, D),
        max_selfcontraction_violation=max_sc,
        comparator_value=float(comparator_value),
        approx_contraction_residual=approx_contraction_residual(trace, budget, seed),
        triples_exhaustive=exhaustive,
    )
