"""Convex bodies, exact Euclidean projections and projection onto intersections.

Points are 1-D float64 numpy arrays. Bodies are immutable and hashable (their
parameters are stored as tuples), so a :class:`FeasibleRegion` can deduplicate
repeated constraints by exact field equality.

Projection onto an intersection uses Dykstra's algorithm. Because plain cyclic
projection only finds *some* point of the intersection, the correction vectors
are kept. When every body active at the Dykstra iterate is polyhedral, the
iterate is finished off by an equality-constrained solve on the active rows and
accepted only if it passes a KKT certificate (primal feasibility on the whole
region, nonnegative multipliers), which makes it the exact projection.
"""

from __future__ import annotations

import math
from itertools import combinations
from operator import mul, sub
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import InvalidBodyError, ProjectionError

__all__ = [
    "Halfspace",
    "Ball",
    "Box",
    "ConvexBody",
    "FeasibleRegion",
    "LiftedPoint",
    "ProjectionInfo",
    "as_point",
    "body_from_dict",
    "contains",
    "oplus_norm",
    "project_ball",
    "project_box",
    "project_halfspace",
    "project_region",
    "project_region_info",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_SWEEPS = 10_000
MIN_NORMAL_NORM = 1e-12
STALL_SWEEPS = 1000


def as_point(p, dim: int | None = None) -> np.ndarray:
    """Coerce ``p`` to a finite 1-D float64 array (copying)."""
    x = np.array(p, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("a point needs at least one coordinate")
    if dim is not None and x.size != dim:
        raise ValueError(f"expected a point of dimension {dim}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"point has non-finite coordinates: {x}")
    return x


def _coords(values, what: str) -> tuple[tuple[float, ...], np.ndarray]:
    """Validated coordinates as a tuple plus a private read-only array copy."""
    arr = np.array(values, dtype=float).reshape(-1)
    out = tuple(arr.tolist())
    if not out:
        raise InvalidBodyError(f"{what} must have at least one coordinate")
    if not all(map(math.isfinite, out)):
        raise InvalidBodyError(f"{what} must be finite, got {out}")
    arr.flags.writeable = False
    return out, arr


@dataclass(frozen=True)
class Halfspace:
    """The set ``{x : normal . x <= offset}``; ``a`` is ``normal`` as a read-only array."""

    normal: tuple[float, ...]
    offset: float

    def __post_init__(self) -> None:
        normal, a = _coords(self.normal, "normal")
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "a", a)
        offset = float(self.offset)
        if not math.isfinite(offset):
            raise InvalidBodyError("halfspace offset must be finite")
        object.__setattr__(self, "offset", offset)
        if math.sqrt(float(a @ a)) < MIN_NORMAL_NORM:
            raise InvalidBodyError(f"halfspace normal is (numerically) zero: {self.normal}")

    kind = "halfspace"

    @property
    def dim(self) -> int:
        return len(self.normal)

    @cached_property
    def _a_sq(self) -> float:
        return float(self.a @ self.a)

    def residual(self, p: np.ndarray) -> float:
        return float(self.a @ p) - self.offset

    def residuals(self, points: np.ndarray) -> np.ndarray:
        return points @ self.a - self.offset

    def project(self, p: np.ndarray) -> np.ndarray:
        excess = float(self.a @ p) - self.offset
        if excess <= 0.0:
            return p
        x = p - (excess / self._a_sq) * self.a
        # one correction step absorbs the rounding of the first
        excess = float(self.a @ x) - self.offset
        if excess > 0.0:
            x = x - (excess / self._a_sq) * self.a
        return x

    def to_dict(self) -> dict:
        return {"type": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Ball:
    """The closed Euclidean ball ``{x : ||x - center|| <= radius}``; ``c`` is the center array."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        center, c = _coords(self.center, "center")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "c", c)
        radius = float(self.radius)
        if not math.isfinite(radius) or radius < 0.0:
            raise InvalidBodyError(f"ball radius must be finite and >= 0, got {self.radius}")
        object.__setattr__(self, "radius", radius)

    kind = "ball"

    @property
    def dim(self) -> int:
        return len(self.center)

    def residual(self, p: np.ndarray) -> float:
        v = p - self.c
        return math.sqrt(float(v @ v)) - self.radius

    def residuals(self, points: np.ndarray) -> np.ndarray:
        return np.linalg.norm(points - self.c, axis=-1) - self.radius

    def project(self, p: np.ndarray) -> np.ndarray:
        v = p - self.c
        dist = math.sqrt(float(v @ v))
        if dist <= self.radius:
            return p
        return self.c + (self.radius / dist) * v

    def to_dict(self) -> dict:
        return {"type": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Box:
    """The axis-aligned box ``{x : lo <= x <= hi}``, with array views ``lo_arr`` and ``hi_arr``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self) -> None:
        lo, lo_arr = _coords(self.lo, "lo")
        hi, hi_arr = _coords(self.hi, "hi")
        if len(lo) != len(hi):
            raise InvalidBodyError("box bounds have different dimensions")
        if any(l > h for l, h in zip(lo, hi)):
            raise InvalidBodyError(f"box needs lo <= hi componentwise, got {lo} / {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "lo_arr", lo_arr)
        object.__setattr__(self, "hi_arr", hi_arr)

    kind = "box"

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi_arr - self.lo_arr))

    def vertices(self) -> np.ndarray:
        grids = np.meshgrid(*[(l, h) for l, h in zip(self.lo, self.hi)], indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def farthest_point(self, p: np.ndarray) -> np.ndarray:
        """Vertex of the box farthest from ``p`` (ties go to ``hi``)."""
        mid = 0.5 * (self.lo_arr + self.hi_arr)
        return np.where(p <= mid, self.hi_arr, self.lo_arr)

    def residual(self, p: np.ndarray) -> float:
        return float(np.maximum(self.lo_arr - p, p - self.hi_arr).max())

    def residuals(self, points: np.ndarray) -> np.ndarray:
        return np.maximum(np.max(self.lo_arr - points, axis=-1), np.max(points - self.hi_arr, axis=-1))

    def project(self, p: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(p, self.lo_arr), self.hi_arr)

    def to_dict(self) -> dict:
        return {"type": "box", "lo": list(self.lo), "hi": list(self.hi)}


ConvexBody = Union[Halfspace, Ball, Box]


def body_from_dict(d: dict) -> ConvexBody:
    kind = d.get("type")
    if kind == "halfspace":
        return Halfspace(d["normal"], d["offset"])
    if kind == "ball":
        return Ball(d["center"], d["radius"])
    if kind == "box":
        return Box(d["lo"], d["hi"])
    raise InvalidBodyError(f"unknown body type {kind!r}")


def project_halfspace(p, h: Halfspace) -> np.ndarray:
    """Exact projection onto a halfspace."""
    return h.project(as_point(p, h.dim))


def project_ball(p, b: Ball) -> np.ndarray:
    """Exact projection onto a ball (radial scaling towards the center)."""
    return b.project(as_point(p, b.dim))


def project_box(p, b: Box) -> np.ndarray:
    """Exact projection onto a box (componentwise clamp)."""
    return b.project(as_point(p, b.dim))


@dataclass(frozen=True)
class FeasibleRegion:
    """Ordered intersection of convex bodies; the first body is the base set.

    ``append`` returns a new region (or ``self`` when the body is already
    present), so a region never changes once built.
    """

    bodies: tuple[ConvexBody, ...]

    def __post_init__(self) -> None:
        bodies = tuple(self.bodies)
        if not bodies:
            raise InvalidBodyError("a feasible region needs at least one body")
        dims = {b.dim for b in bodies}
        if len(dims) != 1:
            raise InvalidBodyError(f"bodies of mixed dimension {sorted(dims)}")
        object.__setattr__(self, "bodies", bodies)

    @classmethod
    def of(cls, *bodies: ConvexBody) -> "FeasibleRegion":
        region = cls((bodies[0],))
        for b in bodies[1:]:
            region = region.append(b)
        return region

    @property
    def dim(self) -> int:
        return self.bodies[0].dim

    @property
    def base(self) -> ConvexBody:
        return self.bodies[0]

    def __len__(self) -> int:
        return len(self.bodies)

    @cached_property
    def _members(self) -> frozenset:
        return frozenset(self.bodies)

    def append(self, body: ConvexBody) -> "FeasibleRegion":
        if body.dim != self.dim:
            raise InvalidBodyError(f"body of dimension {body.dim} added to a {self.dim}-d region")
        if body in self._members:
            return self
        return FeasibleRegion(self.bodies + (body,))

    @cached_property
    def _stack(self) -> "_Stack":
        return _Stack(self.bodies)

    def residuals(self, p: np.ndarray) -> np.ndarray:
        """Membership residual of every body at ``p``, in body order."""
        return self._stack.residuals(p)

    def max_residual(self, p: np.ndarray) -> float:
        return self._stack.max_residual(p)

    def residuals_many(self, points: np.ndarray) -> np.ndarray:
        """Largest residual over bodies for each row of ``points``."""
        return self._stack.max_many(np.atleast_2d(points))

    def contains(self, p, tol: float = 0.0) -> bool:
        return self.max_residual(as_point(p, self.dim)) <= tol

    def to_list(self) -> list[dict]:
        return [b.to_dict() for b in self.bodies]

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "FeasibleRegion":
        return cls.of(*[body_from_dict(d) for d in items])


# Regions with at most this many coefficients are evaluated on plain floats,
# which beats numpy's per-call overhead for a handful of bodies.
SMALL_STACK_COEFFS = 96


class _Stack:
    """Residual evaluation for a region's bodies.

    Small regions are evaluated on plain floats. Otherwise box faces are
    stored as unit rows next to the halfspaces, so every linear residual
    comes from one product; the rows carry exact 0/1 coefficients and
    reproduce ``max(lo - p, p - hi)`` bit for bit.
    """

    def __init__(self, bodies: Sequence[ConvexBody]):
        self.bodies = tuple(bodies)
        self.n = len(bodies)
        self.d = d = bodies[0].dim
        n_rows = sum(1 if isinstance(b, (Halfspace, Ball)) else 2 * d for b in bodies)
        self.small = None
        if d * n_rows <= SMALL_STACK_COEFFS:
            self.small = [(0, b.normal, b.offset) if isinstance(b, Halfspace)
                          else (1, b.lo, b.hi) if isinstance(b, Box)
                          else (2, b.center, b.radius) for b in bodies]

    @cached_property
    def _dense(self):
        bodies, d = self.bodies, self.d
        h_idx = [i for i, b in enumerate(bodies) if isinstance(b, Halfspace)]
        x_idx = [i for i, b in enumerate(bodies) if isinstance(b, Box)]
        b_idx = [i for i, b in enumerate(bodies) if isinstance(b, Ball)]
        eye = np.eye(d)
        rows = [bodies[i].a for i in h_idx]
        offs = [bodies[i].offset for i in h_idx]
        for i in x_idx:
            rows.extend(eye)
            rows.extend(-eye)
            offs.extend(bodies[i].hi)
            offs.extend(-v for v in bodies[i].lo)
        M = np.array(rows, dtype=float).reshape(-1, d)
        c = np.array(offs, dtype=float)
        C = np.array([bodies[i].center for i in b_idx], dtype=float).reshape(-1, d)
        r = np.array([bodies[i].radius for i in b_idx], dtype=float)
        inv = np.argsort(np.array(h_idx + x_idx + b_idx, dtype=int))
        return M, c, C, r, inv, len(h_idx), len(x_idx)

    def _small(self, p: np.ndarray) -> list[float]:
        pl = p.tolist()
        out = []
        for kind, u, v in self.small:
            if kind == 0:
                out.append(sum(map(mul, u, pl)) - v)
            elif kind == 1:
                out.append(max(max(map(sub, u, pl)), max(map(sub, pl, v))))
            else:
                out.append(math.dist(pl, u) - v)
        return out

    def residual_rows(self, P: np.ndarray) -> np.ndarray:
        """Residuals of every body (columns, in body order) at every row of ``P``."""
        if self.small is not None and len(P) <= 8:
            return np.array([self._small(y) for y in P])
        M, c, C, r, inv, nh, nx = self._dense
        lin = P @ M.T - c
        if nx:
            lin = np.concatenate([lin[:, :nh], lin[:, nh:].reshape(
                len(P), nx, 2 * self.d).max(axis=2)], axis=1)
        if r.size:
            v = P[:, None, :] - C
            lin = np.concatenate([lin, np.sqrt(np.einsum("nkd,nkd->nk", v, v)) - r], axis=1)
        return lin[:, inv]

    def residuals(self, p: np.ndarray) -> np.ndarray:
        if self.small is not None:
            return np.array(self._small(p))
        return self.residual_rows(p[None, :])[0]

    def max_residual(self, p: np.ndarray) -> float:
        if self.small is not None:
            return max(self._small(p))
        return float(self.max_many(p[None, :])[0])

    def max_many(self, points: np.ndarray) -> np.ndarray:
        M, c, C, r, _, _, _ = self._dense
        out = np.full(points.shape[0], -np.inf)
        # bound the temporaries to about a million entries
        step = max(1, 1_000_000 // max(1, c.size + r.size * self.d))
        for start in range(0, points.shape[0], step):
            pts = points[start:start + step]
            part = out[start:start + step]
            if c.size:
                np.maximum(part, (pts @ M.T - c).max(axis=1), out=part)
            if r.size:
                v = pts[:, None, :] - C
                np.maximum(part, (np.sqrt(np.einsum("nkd,nkd->nk", v, v)) - r).max(axis=1), out=part)
        return out


def contains(s: FeasibleRegion, p, tol: float = 0.0) -> bool:
    """True iff every body's membership residual at ``p`` is at most ``tol``."""
    return s.contains(p, tol)


@dataclass
class ProjectionInfo:
    """Outcome of :func:`project_region_info`.

    ``method`` is one of ``single`` (one-body region), ``identity`` (input was
    feasible), ``face`` (one exact body projection was already feasible),
    ``polished`` (KKT-certified active-set solve) or ``dykstra``.
    """

    point: np.ndarray
    residual: float
    sweeps: int
    method: str


def project_region(p, s: FeasibleRegion, tol: float = DEFAULT_TOL,
                   max_sweeps: int = DEFAULT_MAX_SWEEPS) -> np.ndarray:
    """Euclidean projection of ``p`` onto the intersection of ``s.bodies``."""
    return project_region_info(p, s, tol, max_sweeps).point


def project_region_info(p, s: FeasibleRegion, tol: float = DEFAULT_TOL,
                        max_sweeps: int = DEFAULT_MAX_SWEEPS) -> ProjectionInfo:
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = as_point(p, s.dim)
    if len(s) == 1:
        x = s.base.project(p)
        return ProjectionInfo(x, max(0.0, s.base.residual(x)), 0, "single")

    # Points within rounding distance of the region are their own projection.
    exact_tol = min(tol, 1e-12)
    res = s.residuals(p)
    worst = float(res.max())
    if worst <= exact_tol:
        return ProjectionInfo(p, max(0.0, worst), 0, "identity")

    # If projecting onto one violated body already lands in the region, that
    # point is the projection onto the (smaller) intersection as well.
    # most violated first: its face is the likeliest member of the active set
    violated = sorted(np.flatnonzero(res > 0.0).tolist(), key=lambda i: -res[i])
    faces = np.array([s.bodies[i].project(p) for i in violated])
    face_res = s._stack.residual_rows(faces)
    face_worst = face_res.max(axis=1)
    for k in range(len(violated)):
        if face_worst[k] <= exact_tol:
            return ProjectionInfo(faces[k], max(0.0, float(face_worst[k])), 0, "face")
    misses = zip(violated, faces, face_res)

    # Otherwise grow an active set from each face point, adding the body the
    # current candidate violates most, before falling back to Dykstra.
    scale = 1.0 + math.sqrt(float(p @ p))
    d = p.size
    for i, ref, r_ref in misses:
        faces = _body_faces(s.bodies[i], p, d)
        members = {i}
        while True:
            j = int(np.argmax(r_ref))
            if j in members:
                break
            members.add(j)
            faces = _merge_faces(faces, _body_faces(s.bodies[j], ref, d))
            if len(faces[0]) + len(faces[2]) > d:
                break
            z = _kkt_point(p, ref, *faces, scale)
            if z is None:
                break
            r_ref = s.residuals(z)
            r = float(r_ref.max())
            if r <= 1e-12 * scale:
                return ProjectionInfo(z, max(0.0, r), 0, "polished")
            ref = z

    return _dykstra_active(p, s, violated, tol, max_sweeps)


def _body_faces(body, ref: np.ndarray, d: int):
    """``body`` as an active constraint at ``ref``: a box contributes the faces ``ref`` violates."""
    if isinstance(body, Halfspace):
        return [body.a], [body.offset], []
    if isinstance(body, Ball):
        return [], [], [body]
    rows, rhs = [], []
    eye = np.eye(d)
    for j in range(d):
        if ref[j] > body.hi[j]:
            rows.append(eye[j])
            rhs.append(body.hi[j])
        elif ref[j] < body.lo[j]:
            rows.append(-eye[j])
            rhs.append(-body.lo[j])
    return rows, rhs, []


def _merge_faces(f, g):
    return f[0] + g[0], f[1] + g[1], f[2] + [b for b in g[2] if b not in f[2]]


def _dykstra_active(p: np.ndarray, s: FeasibleRegion, working: list[int], tol: float,
                    max_sweeps: int) -> ProjectionInfo:
    # Dykstra over a growing working set. The projection onto the intersection
    # of a subset is the projection onto the whole region whenever it happens to
    # be feasible for every body, so bodies are only added when violated.
    sweeps_left = max_sweeps
    while True:
        x, used, polished = _dykstra(p, working, s, tol, sweeps_left)
        sweeps_left -= used
        res = s.residuals(x)
        worst = float(res.max())
        if worst <= tol:
            return ProjectionInfo(x, max(0.0, worst), max_sweeps - sweeps_left,
                                  "polished" if polished else "dykstra")
        extra = [int(i) for i in np.flatnonzero(res > tol) if int(i) not in working]
        if not extra:
            raise ProjectionError("Dykstra stopped with a violated working set",
                                  x, worst, max_sweeps - sweeps_left)
        working = sorted(set(working) | set(extra))


def _dykstra(p: np.ndarray, working: list[int], region: FeasibleRegion, tol: float,
             max_sweeps: int) -> tuple[np.ndarray, int, bool]:
    bodies = [region.bodies[i] for i in working]
    idx = np.array(working)
    x = p.copy()
    incr = np.zeros((len(bodies), p.size))
    feet = np.zeros_like(incr)
    scale = 1.0 + math.sqrt(float(p @ p))
    stalled = 0
    next_polish = 2
    for sweep in range(1, max_sweeps + 1):
        x_prev = x
        for i, body in enumerate(bodies):
            y = x + incr[i]
            x = body.project(y)
            incr[i] = y - x
            feet[i] = x
        step = x - x_prev
        move = math.sqrt(float(step @ step))
        worst = float(region.residuals(x)[idx].max())
        # p - x is the sum of the corrections and each correction is normal to
        # its body at its foot point, so for feasible x the optimality gap
        # (p - x).(z - x) over the region is at most this sum (and it bounds
        # ||x - x*||^2). A resting iterate alone is not enough: corrections can
        # still be traded between bodies.
        gap = float(np.sum(np.maximum(np.einsum("id,id->i", incr, feet - x), 0.0)))
        settled = move < tol and gap <= tol * scale

        if sweep == next_polish or (settled and worst <= tol):
            next_polish *= 2
            # early on only the active set suggested by the corrections is
            # tried; the subset search waits for a settled iterate
            y = _polish(p, x, region, _pushing_rows(bodies, incr, feet, scale),
                        search=settled or sweep >= 16)
            if y is not None:
                return y, sweep, True
        if settled and worst <= tol:
            return x, sweep, False
        # Correction vectors of inactive bodies can build up for a while with
        # the iterate at rest, so only a long stall counts as emptiness.
        if move < tol and worst > tol:
            stalled += 1
            if stalled >= STALL_SWEEPS:
                raise ProjectionError("projection stalled with positive residual "
                                      "(the bodies appear to have empty intersection)",
                                      x, worst, sweep)
        else:
            stalled = 0
    raise ProjectionError(f"Dykstra did not converge within {max_sweeps} sweeps",
                          x, float(region.residuals(x)[idx].max()), max_sweeps)


def _pushing_rows(bodies, incr, feet, scale):
    """Constraints of the bodies whose Dykstra correction is nonzero: the likely active set."""
    rows, rhs, balls = [], [], []
    thr = 1e-12 * scale
    for body, c, foot in zip(bodies, incr, feet):
        if float(c @ c) <= thr * thr:
            continue
        if isinstance(body, Halfspace):
            rows.append(body.a)
            rhs.append(body.offset)
        elif isinstance(body, Box):
            for j in range(foot.size):
                if c[j] > thr:
                    rows.append(np.eye(foot.size)[j])
                    rhs.append(body.hi[j])
                elif c[j] < -thr:
                    rows.append(-np.eye(foot.size)[j])
                    rhs.append(-body.lo[j])
        else:
            balls.append(body)
    return rows, rhs, balls


def _active_rows(region: FeasibleRegion, x: np.ndarray, thr: float):
    """Constraints within ``thr`` of being active at ``x``: linear rows (A, b) and balls."""
    rows, rhs, balls = [], [], []
    d = x.size
    for body in region.bodies:
        if isinstance(body, Halfspace):
            if body.residual(x) >= -thr:
                rows.append(body.a)
                rhs.append(body.offset)
        elif isinstance(body, Box):
            for j in range(d):
                if x[j] >= body.hi[j] - thr:
                    e = np.zeros(d)
                    e[j] = 1.0
                    rows.append(e)
                    rhs.append(body.hi[j])
                if x[j] <= body.lo[j] + thr:
                    e = np.zeros(d)
                    e[j] = -1.0
                    rows.append(e)
                    rhs.append(-body.lo[j])
        elif body.residual(x) >= -thr:
            balls.append(body)
    return rows, rhs, balls


MAX_POLISH_CANDIDATES = 10


def _polish(p: np.ndarray, x: np.ndarray, region: FeasibleRegion,
            guess=None, search: bool = True) -> np.ndarray | None:
    """Exact projection from the constraints nearly active at ``x``, or None.

    ``guess`` (rows, rhs, balls) is tried first as the active set. Failing
    that, and if ``search`` is set, a KKT point needs at most ``d`` active constraints, so subsets of
    the near-active candidates up to that size are tried in turn. A candidate
    is returned only with nonnegative multipliers and feasibility on the
    whole region, which certifies it as the exact projection.
    """
    scale = 1.0 + float(np.linalg.norm(p))
    d = p.size
    if guess is not None and 0 < len(guess[0]) + len(guess[2]) <= d:
        y = _kkt_point(p, x, *guess, scale)
        if y is not None and region.max_residual(y) <= 1e-12 * scale:
            return y
    if not search:
        return None
    tried: set = set()
    for thr in (1e-7 * scale, 1e-4 * scale, 1e-2 * scale):
        rows, rhs, balls = _active_rows(region, x, thr)
        n_rows = len(rows)
        n = n_rows + len(balls)
        if n == 0 or n > MAX_POLISH_CANDIDATES:
            continue
        key = (tuple(map(tuple, rows)), tuple(rhs), tuple(balls))
        if key in tried:
            continue
        tried.add(key)
        if not balls:
            y = _active_set_solve(p, rows, rhs, region, scale)
            if y is not None:
                return y
        for size in range(1, min(d, n) + 1):
            for subset in combinations(range(n), size):
                r = [i for i in subset if i < n_rows]
                bl = [balls[i - n_rows] for i in subset if i >= n_rows]
                y = _kkt_point(p, x, [rows[i] for i in r], [rhs[i] for i in r], bl, scale)
                if y is not None and region.max_residual(y) <= 1e-12 * scale:
                    return y
    return None


def _kkt_point(p, x0, rows, rhs, balls, scale) -> np.ndarray | None:
    """Point where the given rows and spheres hold with equality and p - x lies in
    the cone of their outward normals; None if there is none near ``x0``."""
    feas_tol = 1e-12 * scale
    d = p.size
    m, q = len(rows), len(balls)
    A = np.array(rows, dtype=float).reshape(m, d)
    b = np.array(rhs, dtype=float)
    if q == 0:
        gram = A @ A.T
        try:
            lam = np.linalg.solve(gram, A @ p - b)
        except np.linalg.LinAlgError:
            return None
        if lam.min() < -feas_tol:
            return None
        return p - A.T @ lam
    if q == 1:
        return _one_sphere_point(p, A, b, balls[0], feas_tol)
    C = np.array([bl.c for bl in balls])
    R = np.array([bl.radius for bl in balls])
    x = x0.copy()
    J = np.vstack([A, 2.0 * (x - C)])
    nu = np.linalg.lstsq(J.T, p - x, rcond=None)[0]
    K = np.zeros((d + m + q, d + m + q))
    best = math.inf
    for it in range(25):
        J = np.vstack([A, 2.0 * (x - C)])
        F = np.concatenate([x - p + J.T @ nu, A @ x - b,
                            np.einsum("kd,kd->k", x - C, x - C) - R * R])
        err = float(np.max(np.abs(F)))
        if err <= 1e-14 * scale * scale:
            break
        # Newton from a nearby start contracts fast; a stalling residual
        # means this active set has no KKT point close to x0.
        if it >= 6 and err > 0.5 * best:
            return None
        best = min(best, err)
        K[:d, :d] = (1.0 + 2.0 * float(np.sum(nu[m:]))) * np.eye(d)
        K[:d, d:] = J.T
        K[d:, :d] = J
        try:
            step = np.linalg.solve(K, -F)
        except np.linalg.LinAlgError:
            return None
        x = x + step[:d]
        nu = nu + step[d:]
        if not np.all(np.isfinite(x)):
            return None
    else:
        return None
    if nu.min() < -feas_tol:
        return None
    return x


def _one_sphere_point(p, A, b, ball, feas_tol) -> np.ndarray | None:
    """KKT point for rows ``A x = b`` plus one sphere, in closed form.

    On the affine set, stationarity gives ``x - c = u + s w`` with
    ``u = Proj_aff(c) - c`` in the row space, ``w`` the null-space part of
    ``p - c`` and ``s = 1/(1 + 2 nu)``, so the sphere fixes ``s``.
    """
    c = ball.c
    if A.shape[0] == 1:
        a = A[0]
        aa = float(a @ a)
        lc = np.array([(float(a @ c) - b[0]) / aa])
        lp = np.array([(float(a @ p) - b[0]) / aa])
        u = -lc[0] * a
        w = p - c - (lp[0] - lc[0]) * a
    elif A.shape[0]:
        try:
            # multipliers pulling c and p onto the affine set, in one solve
            lc, lp = np.linalg.solve(A @ A.T, np.stack([A @ c - b, A @ p - b], axis=1)).T
        except np.linalg.LinAlgError:
            return None
        u = -(A.T @ lc)
        w = p - c - A.T @ (lp - lc)
    else:
        u, w = np.zeros_like(p), p - c
    ww = float(w @ w)
    rest = ball.radius ** 2 - float(u @ u)
    if ww == 0.0 or rest < 0.0:
        return None
    s = math.sqrt(rest / ww)
    if s > 1.0 + feas_tol:  # the sphere's multiplier would be negative
        return None
    # row multipliers at y = c + s (p - c), by linearity of the solve
    if A.shape[0] and ((1.0 - s) * lc + s * lp).min() < -feas_tol:
        return None
    return c + u + s * w


def _active_set_solve(p, rows, rhs, region, scale) -> np.ndarray | None:
    rows = list(rows)
    rhs = list(rhs)
    feas_tol = 1e-12 * scale
    for _ in range(4 * (len(rows) + p.size) + 4):
        if not rows:
            return None
        A = np.array(rows)
        b = np.array(rhs)
        gram = A @ A.T
        lam, *_ = np.linalg.lstsq(gram, A @ p - b, rcond=None)
        y = p - A.T @ lam
        if np.max(np.abs(A @ y - b)) > feas_tol:
            return None
        neg = int(np.argmin(lam))
        if lam[neg] < -feas_tol:
            del rows[neg]
            del rhs[neg]
            continue
        res = region.residuals(y)
        worst = int(np.argmax(res))
        if res[worst] <= feas_tol:
            return y
        body = region.bodies[worst]
        if not isinstance(body, Halfspace):
            return None
        rows.append(body.a)
        rhs.append(body.offset)
    return None


@dataclass(frozen=True, eq=False)
class LiftedPoint:
    """An iterate paired with the tail of the perturbation budget."""

    base: np.ndarray
    tail: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "base", as_point(self.base))
        if not self.tail >= 0.0:
            raise ValueError(f"tail must be nonnegative, got {self.tail}")
        object.__setattr__(self, "tail", float(self.tail))


def oplus_norm(base, tail: float) -> float:
    """``||base||_2 + |tail|``, the norm on the lifted space."""
    return float(np.linalg.norm(np.asarray(base, dtype=float))) + abs(float(tail))
