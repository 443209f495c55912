"""Loss and constraint families, instances, and adversarial instance generators.

Every generated instance carries an *anchor*: a point of the base set that
satisfies every constraint with a declared margin, so the final feasible set
is never empty. Constraints are drawn from a pool of ``k`` bodies; a pool body
is revealed once at its scheduled round and then repeated until the next one
is revealed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence, Union

import numpy as np

from .errors import GenerationError
from .geometry import Ball, Box, ConvexBody, FeasibleRegion, Halfspace, as_point, body_from_dict

__all__ = [
    "LinearLoss",
    "QuadraticLoss",
    "MaxAffineLoss",
    "AffineConstraint",
    "BallConstraint",
    "QuasiBallConstraint",
    "LossFn",
    "ConstraintFn",
    "Instance",
    "GeneratorSpec",
    "LOSS_FAMILIES",
    "CONSTRAINT_FAMILIES",
    "eval_loss",
    "subgrad",
    "eval_constraint",
    "sublevel_body",
    "gen_instance",
    "reveal_times",
    "with_ball_kind",
]


def _farthest_distance(base: ConvexBody, z: np.ndarray) -> float:
    """max over x in base of ||x - z||."""
    if isinstance(base, Box):
        return float(np.linalg.norm(base.farthest_point(z) - z))
    if isinstance(base, Ball):
        return float(np.linalg.norm(z - base.c)) + base.radius
    raise TypeError(f"unsupported base set {type(base).__name__}")


def _distance_to(base: ConvexBody, z: np.ndarray) -> float:
    return float(np.linalg.norm(base.project(z) - z))


def _diameter(base: ConvexBody) -> float:
    if isinstance(base, Box):
        return base.diameter
    if isinstance(base, Ball):
        return 2.0 * base.radius
    raise TypeError(f"unsupported base set {type(base).__name__}")


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearLoss:
    """f(x) = slope . x"""

    slope: np.ndarray
    kind = "linear"

    def __post_init__(self) -> None:
        object.__setattr__(self, "slope", as_point(self.slope))

    def value(self, x: np.ndarray) -> float:
        return float(self.slope @ x)

    def subgrad(self, x: np.ndarray) -> np.ndarray:
        return self.slope.copy()

    @property
    def curvature(self) -> float:
        return 0.0

    def lipschitz(self, base: ConvexBody) -> float:
        return float(np.linalg.norm(self.slope))

    def to_dict(self) -> dict:
        return {"kind": "linear", "slope": self.slope.tolist()}


@dataclass(frozen=True, eq=False)
class QuadraticLoss:
    """f(x) = (mu/2) ||x - center||^2"""

    mu: float
    center: np.ndarray
    kind = "quadratic"

    def __post_init__(self) -> None:
        if not self.mu > 0:
            raise ValueError(f"quadratic loss needs mu > 0, got {self.mu}")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "center", as_point(self.center))

    def value(self, x: np.ndarray) -> float:
        v = x - self.center
        return 0.5 * self.mu * float(v @ v)

    def subgrad(self, x: np.ndarray) -> np.ndarray:
        return self.mu * (x - self.center)

    @property
    def curvature(self) -> float:
        return self.mu

    def lipschitz(self, base: ConvexBody) -> float:
        return self.mu * _farthest_distance(base, self.center)

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "mu": self.mu, "center": self.center.tolist()}


@dataclass(frozen=True, eq=False)
class MaxAffineLoss:
    """f(x) = max_i (slopes[i] . x + intercepts[i])

    Subgradients break ties towards the lowest index.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    kind = "max-affine"

    def __post_init__(self) -> None:
        slopes = np.atleast_2d(np.array(self.slopes, dtype=float))
        intercepts = np.array(self.intercepts, dtype=float).reshape(-1)
        if slopes.shape[0] != intercepts.size or slopes.shape[0] == 0:
            raise ValueError("max-affine loss needs one intercept per slope")
        if not (np.all(np.isfinite(slopes)) and np.all(np.isfinite(intercepts))):
            raise ValueError("max-affine pieces must be finite")
        object.__setattr__(self, "slopes", slopes)
        object.__setattr__(self, "intercepts", intercepts)

    def value(self, x: np.ndarray) -> float:
        return float(np.max(self.slopes @ x + self.intercepts))

    def subgrad(self, x: np.ndarray) -> np.ndarray:
        # argmax returns the first maximizer
        return self.slopes[int(np.argmax(self.slopes @ x + self.intercepts))].copy()

    @property
    def curvature(self) -> float:
        return 0.0

    def lipschitz(self, base: ConvexBody) -> float:
        return float(np.max(np.linalg.norm(self.slopes, axis=1)))

    def to_dict(self) -> dict:
        return {"kind": "max-affine", "slopes": self.slopes.tolist(),
                "intercepts": self.intercepts.tolist()}


LossFn = Union[LinearLoss, QuadraticLoss, MaxAffineLoss]


def loss_from_dict(d: dict) -> LossFn:
    kind = d["kind"]
    if kind == "linear":
        return LinearLoss(d["slope"])
    if kind == "quadratic":
        return QuadraticLoss(d["mu"], d["center"])
    if kind == "max-affine":
        return MaxAffineLoss(d["slopes"], d["intercepts"])
    raise ValueError(f"unknown loss kind {kind!r}")


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineConstraint:
    """g(x) = a . x - b"""

    a: tuple[float, ...]
    b: float
    kind = "affine"

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", tuple(float(v) for v in np.asarray(self.a).reshape(-1)))
        object.__setattr__(self, "b", float(self.b))

    def value(self, x: np.ndarray) -> float:
        return float(np.dot(self.a, x)) - self.b

    def sublevel_body(self) -> Halfspace:
        return Halfspace(self.a, self.b)

    def lipschitz(self, base: ConvexBody) -> float:
        return float(np.linalg.norm(self.a))

    def to_dict(self) -> dict:
        return {"kind": "affine", "a": list(self.a), "b": self.b}


@dataclass(frozen=True)
class BallConstraint:
    """g(x) = ||x - c|| - r  (ball-distance)"""

    c: tuple[float, ...]
    r: float
    kind = "ball-distance"

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", tuple(float(v) for v in np.asarray(self.c).reshape(-1)))
        object.__setattr__(self, "r", float(self.r))

    def value(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - np.asarray(self.c))) - self.r

    def sublevel_body(self) -> Ball:
        return Ball(self.c, self.r)

    def lipschitz(self, base: ConvexBody) -> float:
        return 1.0

    def to_dict(self) -> dict:
        return {"kind": "ball-distance", "c": list(self.c), "r": self.r}


@dataclass(frozen=True)
class QuasiBallConstraint:
    """g(x) = sqrt(||x - c||) - sqrt(r)

    Quasiconvex but not convex; its 0-sublevel set is the same ball as
    :class:`BallConstraint` with equal ``(c, r)``.
    """

    c: tuple[float, ...]
    r: float
    kind = "quasi-ball"

    def __post_init__(self) -> None:
        object.__setattr__(self, "c", tuple(float(v) for v in np.asarray(self.c).reshape(-1)))
        object.__setattr__(self, "r", float(self.r))

    def value(self, x: np.ndarray) -> float:
        return math.sqrt(float(np.linalg.norm(x - np.asarray(self.c)))) - math.sqrt(self.r)

    def sublevel_body(self) -> Ball:
        return Ball(self.c, self.r)

    def lipschitz(self, base: ConvexBody) -> float:
        # |d/dx sqrt(||x-c||)| = 1 / (2 sqrt(||x-c||)); blows up only at c,
        # which is excluded with a 1e-6 guard.
        dist = max(_distance_to(base, np.asarray(self.c)), 1e-6)
        return 0.5 / math.sqrt(dist)

    def to_dict(self) -> dict:
        return {"kind": "quasi-ball", "c": list(self.c), "r": self.r}


ConstraintFn = Union[AffineConstraint, BallConstraint, QuasiBallConstraint]


def constraint_from_dict(d: dict) -> ConstraintFn:
    kind = d["kind"]
    if kind == "affine":
        return AffineConstraint(d["a"], d["b"])
    if kind == "ball-distance":
        return BallConstraint(d["c"], d["r"])
    if kind == "quasi-ball":
        return QuasiBallConstraint(d["c"], d["r"])
    raise ValueError(f"unknown constraint kind {kind!r}")


def eval_loss(f: LossFn, x) -> float:
    return f.value(as_point(x))


def subgrad(f: LossFn, x) -> np.ndarray:
    return f.subgrad(as_point(x))


def eval_constraint(g: ConstraintFn, x) -> float:
    return g.value(as_point(x))


def sublevel_body(g: ConstraintFn) -> ConvexBody:
    """The convex body ``{x : g(x) <= 0}``."""
    return g.sublevel_body()


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Instance:
    """A finite-horizon constrained OCO instance with a feasibility witness.

    ``G`` may exceed the largest per-round Lipschitz constant (it is an upper
    bound), but never undercut it; ``D`` must equal the base set diameter.
    """

    dimension: int
    base: ConvexBody
    losses: tuple
    constraints: tuple
    anchor: np.ndarray
    D: float
    G: float
    seed: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "anchor", as_point(self.anchor, self.dimension))
        if len(self.losses) != len(self.constraints):
            raise GenerationError("losses and constraints must have the same length")
        if not isinstance(self.base, (Box, Ball)) or self.base.dim != self.dimension:
            raise GenerationError("base set must be a Box or Ball of the instance dimension")
        if not math.isclose(self.D, _diameter(self.base), rel_tol=1e-12, abs_tol=1e-12):
            raise GenerationError(f"D={self.D} differs from the base diameter {_diameter(self.base)}")
        if self.base.residual(self.anchor) > 1e-12:
            raise GenerationError("anchor is outside the base set")
        for t, g in enumerate(self.constraints, start=1):
            if g.value(self.anchor) > 0.0:
                raise GenerationError(f"anchor violates constraint of round {t}")
        lip = self.max_lipschitz()
        if self.G < lip * (1 - 1e-12):
            raise GenerationError(f"G={self.G} is below the largest Lipschitz constant {lip}")

    @property
    def T(self) -> int:
        return len(self.losses)

    def max_lipschitz(self) -> float:
        cache: dict[int, float] = {}
        best = 0.0
        for fn in (*self.losses, *self.constraints):
            key = id(fn)
            if key not in cache:
                cache[key] = fn.lipschitz(self.base)
            best = max(best, cache[key])
        return best

    def curvatures(self) -> list[float]:
        return [f.curvature for f in self.losses]

    def final_region(self) -> FeasibleRegion:
        """S_T: the base set intersected with every revealed sublevel set."""
        region = FeasibleRegion((self.base,))
        for g in self.constraints:
            region = region.append(g.sublevel_body())
        return region

    def start_point(self, policy) -> np.ndarray:
        """Resolve a start-point policy: ``"anchor"``, ``"corner"`` or coordinates."""
        if isinstance(policy, str):
            if policy == "anchor":
                return self.anchor.copy()
            if policy == "corner":
                return _far_point(self.base, self.anchor)
            raise ValueError(f"unknown start policy {policy!r}")
        x = as_point(policy, self.dimension)
        if self.base.residual(x) > 1e-12:
            raise ValueError("start point must lie in the base set")
        return x

    def prefix(self, T: int) -> "Instance":
        return Instance(self.dimension, self.base, self.losses[:T], self.constraints[:T],
                        self.anchor, self.D, self.G, self.seed, self.name)

    def to_dict(self) -> dict:
        # Pooled constraints are stored once and referenced by index.
        pool: list[dict] = []
        index: dict = {}
        refs = []
        for g in self.constraints:
            if g not in index:
                index[g] = len(pool)
                pool.append(g.to_dict())
            refs.append(index[g])
        return {
            "dimension": self.dimension,
            "base": self.base.to_dict(),
            "T": self.T,
            "losses": [f.to_dict() for f in self.losses],
            "constraint_pool": pool,
            "constraints": refs,
            "anchor": self.anchor.tolist(),
            "D": self.D,
            "G": self.G,
            "seed": self.seed,
            "name": self.name,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        pool = [constraint_from_dict(c) for c in d["constraint_pool"]]
        return cls(
            dimension=int(d["dimension"]),
            base=body_from_dict(d["base"]),
            losses=tuple(loss_from_dict(f) for f in d["losses"]),
            constraints=tuple(pool[i] for i in d["constraints"]),
            anchor=np.array(d["anchor"], dtype=float),
            D=float(d["D"]),
            G=float(d["G"]),
            seed=int(d.get("seed", 0)),
            name=d.get("name", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


def with_ball_kind(inst: Instance, kind: str) -> Instance:
    """Copy of ``inst`` with every ball-type constraint rewritten as ``kind``.

    ``kind`` is ``"ball-distance"`` or ``"quasi-ball"``. Level sets, and hence
    the feasible regions, are unchanged; ``G`` is kept unless the new
    constraints need a larger constant.
    """
    cls = {"ball-distance": BallConstraint, "quasi-ball": QuasiBallConstraint}[kind]
    memo: dict = {}
    out = []
    for g in inst.constraints:
        if isinstance(g, (BallConstraint, QuasiBallConstraint)):
            if g not in memo:
                memo[g] = cls(g.c, g.r)
            out.append(memo[g])
        else:
            out.append(g)
    G = max(inst.G, max((g.lipschitz(inst.base) for g in memo.values()), default=0.0))
    return Instance(inst.dimension, inst.base, inst.losses, tuple(out), inst.anchor,
                    inst.D, G, inst.seed, inst.name)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

LOSS_FAMILIES = ("rotating-linear", "drifting-quadratic")
CONSTRAINT_FAMILIES = ("shrinking-halfspaces", "mixed-quasiball")
REVEAL_PACINGS = ("sqrt", "log", "uniform")

# Pacing used when a spec does not choose one. Log pacing spreads the pool
# over the whole horizon; combined with a slow rotation the linear family then
# keeps meeting fresh cut directions, so CCV grows polynomially there while
# the quadratic family, pressing in one direction, grows logarithmically.
DEFAULT_REVEAL = {"rotating-linear": "log", "drifting-quadratic": "log"}

DEFAULT_PARAMS: dict[str, Any] = {
    "k": 32,
    "margin": 0.1,
    "reveal": None,
    "pace_horizon": 8192,
    "jitter": 0.0,
    "half_width": 1.0,
    "base": "box",
    "angle": 2 * math.pi / 2048,
    "mu": 1.0,
    "walk_step": 0.02,
    "quasi_fraction": 0.5,
    "center_distance": 2.0,
}


@dataclass(frozen=True)
class GeneratorSpec:
    """What to generate: a loss family, a constraint family and their parameters.

    Unknown parameter names are rejected. See ``DEFAULT_PARAMS`` for the
    recognised keys and their defaults.
    """

    loss: str
    constraints: str
    d: int
    T: int
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.loss not in LOSS_FAMILIES:
            raise GenerationError(f"unknown loss family {self.loss!r}; choose from {LOSS_FAMILIES}")
        if self.constraints not in CONSTRAINT_FAMILIES:
            raise GenerationError(f"unknown constraint family {self.constraints!r}; "
                                  f"choose from {CONSTRAINT_FAMILIES}")
        unknown = set(self.params) - set(DEFAULT_PARAMS)
        if unknown:
            raise GenerationError(f"unknown generator parameters {sorted(unknown)}")
        if self.d < 1:
            raise GenerationError("dimension must be >= 1")
        if self.T < 0:
            raise GenerationError("horizon must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise GenerationError("seed must be a 64-bit unsigned integer")

    def resolved(self) -> dict:
        p = {**DEFAULT_PARAMS, **self.params}
        if p["reveal"] is None:
            p["reveal"] = DEFAULT_REVEAL[self.loss]
        return p

    def with_(self, **changes) -> "GeneratorSpec":
        kw = {"loss": self.loss, "constraints": self.constraints, "d": self.d, "T": self.T,
              "seed": self.seed, "params": dict(self.params)}
        kw.update(changes)
        return GeneratorSpec(**kw)

    def to_dict(self) -> dict:
        return {"loss": self.loss, "constraints": self.constraints, "d": self.d,
                "T": self.T, "seed": self.seed, "params": dict(self.params)}


def reveal_times(k: int, pacing: str, horizon: int, T: int) -> list[int]:
    """Rounds (1-based, strictly increasing) at which pool bodies 0..k-1 appear.

    ``sqrt``: 1 + (H-1)(i/(k-1))^2, so about sqrt(t) bodies by round t.
    ``log``: H^(i/(k-1)), so about log(t) bodies by round t.
    ``uniform``: evenly spread over the actual horizon ``T``.
    Collisions are pushed to the next free round.
    """
    if pacing not in REVEAL_PACINGS:
        raise GenerationError(f"unknown reveal pacing {pacing!r}")
    H = max(int(horizon), 2)
    times = []
    for i in range(k):
        frac = i / (k - 1) if k > 1 else 0.0
        if pacing == "sqrt":
            tau = 1 + (H - 1) * frac**2
        elif pacing == "log":
            tau = H**frac
        else:
            tau = 1 + (max(T, 1) - 1) * frac
        t = math.ceil(tau - 1e-9)
        if times:
            t = max(t, times[-1] + 1)
        times.append(max(t, 1))
    return times


def _unit(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        v = rng.standard_normal(v.size)
        n = float(np.linalg.norm(v))
    return v / n


def _far_point(base: ConvexBody, anchor: np.ndarray) -> np.ndarray:
    if isinstance(base, Box):
        return base.farthest_point(anchor)
    v = anchor - base.c
    n = float(np.linalg.norm(v))
    u = np.eye(anchor.size)[0] if n == 0.0 else v / n
    return base.c - base.radius * u


def _support(base: ConvexBody, u: np.ndarray) -> float:
    """max over x in base of u . x"""
    if isinstance(base, Box):
        return float(np.sum(np.maximum(u * base.lo_arr, u * base.hi_arr)))
    return float(u @ base.c) + base.radius * float(np.linalg.norm(u))


def gen_instance(spec: GeneratorSpec) -> Instance:
    """Generate a deterministic instance from ``spec``.

    Raises:
        GenerationError: if no anchor with the requested margin exists.
    """
    p = spec.resolved()
    d, T = spec.d, spec.T
    k = int(p["k"])
    margin = float(p["margin"])
    w = float(p["half_width"])
    if k < 1:
        raise GenerationError("pool size k must be >= 1")
    if w <= 0:
        raise GenerationError("half_width must be positive")
    if margin < 0 or margin >= w:
        raise GenerationError(f"no anchor has margin {margin} inside a base set of half-width {w}")

    rng = np.random.default_rng(spec.seed)
    if p["base"] == "box":
        base: ConvexBody = Box(-w * np.ones(d), w * np.ones(d))
        inner = max(w - max(margin, 0.5 * w), 0.0)
        anchor = rng.uniform(-inner, inner, size=d)
    elif p["base"] == "ball":
        base = Ball(np.zeros(d), w)
        inner = w - max(margin, 0.5 * w)
        direction = _unit(rng.standard_normal(d), rng)
        anchor = direction * inner * rng.uniform() ** (1.0 / d)
    else:
        raise GenerationError(f"unknown base set {p['base']!r}")
    D = _diameter(base)

    losses, pressure = _gen_losses(spec.loss, p, d, T, anchor, base, rng)
    times = reveal_times(k, p["reveal"], int(p["pace_horizon"]), T)
    pool = _gen_pool(spec.constraints, p, k, times, pressure, anchor, base, D, rng)

    constraints = []
    j = 0
    for t in range(1, T + 1):
        while j + 1 < k and times[j + 1] <= t:
            j += 1
        constraints.append(pool[j])

    lip = max([f.lipschitz(base) for f in losses] + [g.lipschitz(base) for g in set(constraints)],
              default=1.0)
    name = f"{spec.loss}/{spec.constraints}/d={d}/T={T}/seed={spec.seed}"
    return Instance(d, base, tuple(losses), tuple(constraints), anchor, D, lip, spec.seed, name)


def _gen_losses(family: str, p: dict, d: int, T: int, anchor: np.ndarray, base: ConvexBody,
                rng: np.random.Generator):
    """Losses for rounds 1..T and the outward 'pressure' direction of each round."""
    losses: list = []
    pressure = np.zeros((T, d))
    if family == "rotating-linear":
        phase = rng.uniform(0.0, 2 * math.pi)
        if d >= 2:
            q, _ = np.linalg.qr(rng.standard_normal((d, 2)))
            e1, e2 = q[:, 0], q[:, 1]
        for t in range(T):
            ang = phase + p["angle"] * t
            if d == 1:
                g = np.array([1.0 if math.cos(ang) >= 0 else -1.0])
            else:
                g = math.cos(ang) * e1 + math.sin(ang) * e2
            losses.append(LinearLoss(g))
            pressure[t] = -g
    elif family == "drifting-quadratic":
        mu = float(p["mu"])
        if not mu > 0:
            raise GenerationError("drifting-quadratic needs mu > 0")
        # The walk starts at the point of the base set farthest from the
        # anchor and stays inside the base set.
        z = _far_point(base, anchor)
        step = float(p["walk_step"])
        for t in range(T):
            losses.append(QuadraticLoss(mu, z.copy()))
            pressure[t] = z - anchor
            z = base.project(z + step * rng.standard_normal(d) / math.sqrt(d))
    else:
        raise GenerationError(f"unknown loss family {family!r}")
    return losses, pressure


def _gen_pool(family: str, p: dict, k: int, times: list[int], pressure: np.ndarray,
              anchor: np.ndarray, base: ConvexBody, D: float, rng: np.random.Generator):
    d = anchor.size
    T = pressure.shape[0]
    margin = float(p["margin"])
    jitter = float(p["jitter"])
    pool = []
    for i in range(k):
        t = times[i]
        push = pressure[t - 1] if t <= T else pressure[-1] if T else np.zeros(d)
        u = _unit(_unit(push, rng) + jitter * rng.standard_normal(d), rng)
        # Later bodies leave a smaller fraction of the base set's extent in
        # direction u, so the region shrinks towards the anchor.
        room = max(_support(base, u) - float(u @ anchor) - margin, 0.0)
        slack = room * (1.0 - (i + 1) / (k + 1))
        if family == "shrinking-halfspaces":
            pool.append(AffineConstraint(u, float(u @ anchor) + margin + slack))
        elif family == "mixed-quasiball":
            rho = float(p["center_distance"]) * D
            c = anchor - rho * u
            r = rho + margin + slack
            quasi = rng.uniform() < float(p["quasi_fraction"])
            pool.append((QuasiBallConstraint if quasi else BallConstraint)(c, r))
        else:
            raise GenerationError(f"unknown constraint family {family!r}")
    return pool
