"""Experiment configuration, T-sweeps, CSV/JSON output and the property suite.

Cell seeds are derived from the configured seeds as

    cell_seed = seed XOR mix64((T << 32) | index)

where ``index`` is the seed's position in the config and ``mix64`` is the
splitmix64 finalizer. Cells are therefore independent and reproducible.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable

import numpy as np

from . import geometry
from .algorithm import StepSchedule, run
from .analysis import (
    MetricsReport,
    ccv,
    check_self_contracted,
    compute_metrics,
    lift,
    movement,
    regret,
    regret_bound_lemma,
    scaling_fit,
)
from .errors import ConfigError, NPOGDError
from .geometry import Ball, Box, FeasibleRegion, Halfspace, oplus_norm, project_region
from .oracle import offline_optimum
from .problem import (
    CONSTRAINT_FAMILIES,
    LOSS_FAMILIES,
    GeneratorSpec,
    gen_instance,
    with_ball_kind,
)

__all__ = [
    "CSV_HEADER",
    "ExperimentConfig",
    "CellResult",
    "SweepResult",
    "CheckResult",
    "VerifyReport",
    "mix64",
    "cell_seed",
    "run_cell",
    "run_experiment",
    "projection_suite",
    "verify_suite",
]

CSV_HEADER = ("T", "seed", "regret", "regret_bound_lemma", "regret_bound_theorem", "ccv",
              "movement", "sum_e_norm", "movement_ratio", "max_sc_violation",
              "comparator_value", "runtime_ms")

DEFAULT_T_LIST = (256, 512, 1024, 2048, 4096, 8192)

_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit unsigned integer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def cell_seed(seed: int, T: int, index: int) -> int:
    return seed ^ mix64(((T & 0xFFFFFFFF) << 32) | (index & 0xFFFFFFFF))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """A sweep over horizons and seeds, loaded from a single JSON document.

    ``generator`` holds ``loss``, ``constraints`` and optional ``params``;
    ``schedule`` holds ``kind`` plus ``mu`` or ``eta`` where needed (sqrt-decay
    takes D and G from each instance). Unknown keys are rejected at every
    level.
    """

    dimension: int = 2
    generator: dict = field(default_factory=lambda: {"loss": "drifting-quadratic",
                                                     "constraints": "shrinking-halfspaces"})
    schedule: dict = field(default_factory=lambda: {"kind": "strongly-convex", "mu": 1.0})
    T_list: tuple = DEFAULT_T_LIST
    seeds: tuple = (1,)
    start: Any = "corner"
    projection_tol: float = geometry.DEFAULT_TOL
    max_sweeps: int = geometry.DEFAULT_MAX_SWEEPS
    oracle_tol: float = 1e-8
    oracle_max_iters: int = 1_000_000
    triple_budget: Any = "auto"
    csv_path: str | None = None
    json_path: str | None = None
    workers: int = 1
    record_runtime: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "T_list", tuple(self.T_list))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(self, "generator", dict(self.generator))
        object.__setattr__(self, "schedule", dict(self.schedule))
        self.validate()

    def validate(self) -> None:
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise ConfigError("dimension must be a positive integer")
        if not self.T_list:
            raise ConfigError("T_list must not be empty")
        if any(not isinstance(T, int) or T < 1 for T in self.T_list):
            raise ConfigError("T_list entries must be positive integers")
        if any(b <= a for a, b in zip(self.T_list, self.T_list[1:])):
            raise ConfigError("T_list must be strictly increasing")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if any(not isinstance(s, int) or not 0 <= s <= _MASK64 for s in self.seeds):
            raise ConfigError("seeds must be 64-bit unsigned integers")
        unknown = set(self.generator) - {"loss", "constraints", "params"}
        if unknown:
            raise ConfigError(f"unknown generator keys {sorted(unknown)}")
        if self.generator.get("loss") not in LOSS_FAMILIES:
            raise ConfigError(f"generator.loss must be one of {LOSS_FAMILIES}")
        if self.generator.get("constraints") not in CONSTRAINT_FAMILIES:
            raise ConfigError(f"generator.constraints must be one of {CONSTRAINT_FAMILIES}")
        unknown = set(self.schedule) - {"kind", "mu", "eta"}
        if unknown:
            raise ConfigError(f"unknown schedule keys {sorted(unknown)}")
        try:
            self.make_schedule(1.0, 1.0)
            self.generator_spec(self.T_list[0], 0)
        except (ValueError, NPOGDError) as err:
            raise ConfigError(str(err)) from err
        if not (self.projection_tol > 0 and self.oracle_tol > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_sweeps < 1 or self.oracle_max_iters < 1:
            raise ConfigError("iteration limits must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (self.triple_budget in ("auto", "exhaustive")
                or (isinstance(self.triple_budget, int) and self.triple_budget > 0)):
            raise ConfigError("triple_budget must be 'auto', 'exhaustive' or a positive integer")

    @property
    def regime(self) -> str:
        return self.schedule["kind"]

    def make_schedule(self, D: float, G: float) -> StepSchedule:
        kind = self.schedule.get("kind")
        if kind == "sqrt-decay":
            return StepSchedule.sqrt_decay(D, G)
        if kind == "strongly-convex":
            return StepSchedule.strongly_convex(self.schedule.get("mu", 1.0))
        if kind == "constant":
            return StepSchedule.constant(self.schedule.get("eta", math.nan))
        raise ConfigError(f"unknown schedule kind {kind!r}")

    def generator_spec(self, T: int, seed: int) -> GeneratorSpec:
        return GeneratorSpec(self.generator["loss"], self.generator["constraints"],
                             self.dimension, T, seed, dict(self.generator.get("params", {})))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as err:
            raise ConfigError(str(err)) from err

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as err:
            raise ConfigError(f"invalid JSON: {err}") from err
        return cls.from_dict(d)

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        return cls.from_json(text)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["T_list"] = list(self.T_list)
        d["seeds"] = list(self.seeds)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **changes})


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass
class CellResult:
    T: int
    seed: int
    index: int
    cell_seed: int
    metrics: MetricsReport | None
    runtime_ms: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.metrics is not None

    def csv_row(self) -> list[str]:
        m = self.metrics
        if m is None:
            values = [math.nan] * 9
        else:
            values = [m.regret, m.regret_bound_lemma, m.regret_bound_theorem, m.ccv,
                      m.movement, m.sum_e_norm, m.movement_ratio,
                      m.max_selfcontraction_violation, m.comparator_value]
        return [str(self.T), str(self.seed)] + [_fmt(v) for v in values] + [_fmt(self.runtime_ms)]


def run_cell(cfg: ExperimentConfig, T: int, index: int) -> CellResult:
    """Generate, run, solve offline and measure one (T, seed) cell; errors are captured."""
    seed = cfg.seeds[index]
    cs = cell_seed(seed, T, index)
    t0 = time.perf_counter()
    try:
        inst = gen_instance(cfg.generator_spec(T, cs))
        schedule = cfg.make_schedule(inst.D, inst.G)
        trace = run(inst, schedule, cfg.start, cfg.projection_tol, cfg.max_sweeps)
        opt = offline_optimum(inst, cfg.oracle_tol, cfg.oracle_max_iters, cfg.projection_tol)
        metrics = compute_metrics(trace, inst.D, inst.G, inst.curvatures(), schedule, opt.value,
                                  cfg.triple_budget, cs)
        error = None
    except (NPOGDError, ValueError, ArithmeticError) as err:
        metrics, error = None, f"{type(err).__name__}: {err}"
    ms = (time.perf_counter() - t0) * 1e3 if cfg.record_runtime else 0.0
    return CellResult(T, seed, index, cs, metrics, ms, error)


def _run_cell_args(args) -> CellResult:
    return run_cell(*args)


@dataclass
class SweepResult:
    """Per-cell metrics, scaling fits on per-T means and the sweep-wide max movement ratio.

    ``fits[metric][model]`` is ``{"slope": ..., "r2": ...}``; a metric whose
    fit is undefined (fewer than three horizons, or nonpositive values under
    the log-log model) maps to ``None``.
    """

    config: ExperimentConfig
    cells: list[CellResult]
    fits: dict[str, dict[str, dict | None]]
    max_movement_ratio: float

    @property
    def failed(self) -> list[CellResult]:
        return [c for c in self.cells if not c.ok]

    def rows(self, T: int | None = None) -> list[CellResult]:
        return [c for c in self.cells if T is None or c.T == T]

    def column(self, name: str, T: int | None = None) -> np.ndarray:
        return np.array([getattr(c.metrics, name) for c in self.rows(T) if c.ok], dtype=float)

    def mean_series(self, name: str) -> list[tuple[int, float]]:
        out = []
        for T in self.config.T_list:
            vals = self.column(name, T)
            if vals.size:
                out.append((T, float(np.mean(vals))))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in self.cells:
            w.writerow(c.csv_row())
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "rows": len(self.cells),
            "failed_cells": [{"T": c.T, "seed": c.seed, "cell_seed": c.cell_seed, "error": c.error}
                             for c in self.failed],
            "fits": self.fits,
            "max_movement_ratio": self.max_movement_ratio,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True, allow_nan=True)

    def write(self, csv_path: str | None = None, json_path: str | None = None) -> None:
        csv_path = csv_path or self.config.csv_path
        json_path = json_path or self.config.json_path
        if csv_path:
            with open(csv_path, "w", newline="") as fh:
                fh.write(self.to_csv())
        if json_path:
            with open(json_path, "w") as fh:
                fh.write(self.to_json())


def _regime_model(kind: str) -> str:
    return "logT" if kind == "strongly-convex" else "sqrtT"


def _fits(result: SweepResult) -> dict[str, dict[str, dict | None]]:
    model = _regime_model(result.config.regime)
    out: dict[str, dict[str, dict | None]] = {}
    for metric in ("regret", "ccv"):
        series = result.mean_series(metric)
        out[metric] = {}
        for m in (model, "loglog"):
            try:
                slope, r2 = scaling_fit(series, m)
                out[metric][m] = {"slope": slope, "r2": r2}
            except ValueError:
                out[metric][m] = None
    return out


def run_experiment(cfg: ExperimentConfig) -> SweepResult:
    """Run every (T, seed) cell and fit the scaling of regret and CCV.

    Fits use the mean over seeds at each horizon: ``logT`` for the
    strongly-convex schedule, ``sqrtT`` otherwise, plus ``loglog``.
    """
    jobs = [(cfg, T, i) for T in cfg.T_list for i in range(len(cfg.seeds))]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            cells = list(pool.map(_run_cell_args, jobs))
    else:
        cells = [_run_cell_args(j) for j in jobs]
    cells.sort(key=lambda c: (c.T, c.index))
    ratios = [c.metrics.movement_ratio for c in cells if c.ok]
    result = SweepResult(cfg, cells, {}, max(ratios) if ratios else math.nan)
    result.fits = _fits(result)
    return result


# ---------------------------------------------------------------------------
# Property suite
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    witness: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return f"{status}  {self.name}: witness={self.witness:.3e} threshold={self.threshold:.1e}{extra}"


@dataclass
class VerifyReport:
    level: str
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"{len(self.checks) - len(self.failures)}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def _random_body(kind: str, d: int, rng: np.random.Generator):
    if kind == "halfspace":
        return Halfspace(rng.standard_normal(d), rng.normal())
    if kind == "ball":
        return Ball(rng.standard_normal(d), rng.uniform(0.1, 2.0))
    lo = rng.uniform(-2.0, 0.0, d)
    return Box(lo, lo + rng.uniform(0.1, 2.0, d))


def _random_region(d: int, rng: np.random.Generator) -> tuple[FeasibleRegion, np.ndarray]:
    """Box, one ball and a few halfspaces around a common interior point, returned with it."""
    center = rng.uniform(-0.5, 0.5, d)
    bodies = [Box(np.full(d, -2.0), np.full(d, 2.0)),
              Ball(center + rng.uniform(-0.3, 0.3, d), rng.uniform(1.0, 1.8))]
    k = int(rng.integers(1, 5))
    normals = rng.standard_normal((k, d))
    margins = rng.uniform(0.05, 0.8, k) * np.linalg.norm(normals, axis=1)
    for a, off in zip(normals, normals @ center + margins):
        bodies.append(Halfspace(a, off))
    return FeasibleRegion(tuple(bodies)), center


def _ray_exit(body, c: np.ndarray, u: np.ndarray) -> float:
    """Largest t >= 0 with ``c + t u`` in ``body``, for ``c`` inside it."""
    if isinstance(body, Halfspace):
        a = np.asarray(body.normal)
        au = float(a @ u)
        return math.inf if au <= 0 else max(0.0, (body.offset - float(a @ c)) / au)
    if isinstance(body, Ball):
        v = c - np.asarray(body.center)
        b = float(v @ u)
        disc = b * b - float(v @ v) + body.radius ** 2
        return max(0.0, -b + math.sqrt(max(disc, 0.0)))
    t = math.inf
    for ci, ui, lo, hi in zip(c, u, body.lo, body.hi):
        if ui > 0:
            t = min(t, (hi - ci) / ui)
        elif ui < 0:
            t = min(t, (lo - ci) / ui)
    return max(0.0, t)


def _comparison_point(K, inside, d: int, rng: np.random.Generator) -> np.ndarray:
    """A feasible point of ``K`` that does not depend on any projection routine.

    Single bodies use their closed forms. For a region, a random ray from the
    interior point ``inside`` is followed to the exact point where it leaves
    the region, so every boundary point can come up.
    """
    if inside is None:
        return K.project(rng.normal(scale=3.0, size=d))
    u = rng.standard_normal(d)
    u /= _norm(u)
    t = min(_ray_exit(b, inside, u) for b in K.bodies)
    x = inside + t * u
    # shrink towards the interior point until rounding no longer leaves x outside
    while K.max_residual(x) > 0.0 and t > 0.0:
        t *= 1.0 - 1e-12
        x = inside + t * u if t > 1e-300 else inside
    return x


def _norm(v: np.ndarray) -> float:
    return math.sqrt(float(v @ v))


def _projection_checks(name: str, n: int, d: int, make, project, rng, tol) -> list[CheckResult]:
    """Property checks of ``project`` on ``n`` random sets from ``make``.

    ``make(rng)`` returns a set and a point strictly inside it, or None for a
    single body.
    Feasible comparison points never come from a projection routine, so only
    the map under test can make a check fail. The vectors are tiny, so the
    residuals are computed on plain floats.
    """
    vi = pyth = nonexp = member = idem = -math.inf
    queries = rng.normal(scale=3.0, size=(n, 2, d))
    dist = math.dist
    for z, w in queries:
        K, inside = make(rng)
        x = _comparison_point(K, inside, d, rng).tolist()
        pz_arr = project(z, K)
        pz, pw = pz_arr.tolist(), project(w, K).tolist()
        zl, wl = z.tolist(), w.tolist()
        inner = math.fsum((a - b) * (c - b) for a, b, c in zip(zl, pz, x))
        vi = max(vi, inner / (1.0 + math.hypot(*zl)))
        pyth = max(pyth, dist(pz, x) - dist(zl, x))
        nonexp = max(nonexp, dist(pz, pw) - dist(zl, wl))
        member = max(member, K.max_residual(pz_arr) if isinstance(K, FeasibleRegion) else K.residual(pz_arr))
        idem = max(idem, dist(project(pz_arr, K).tolist(), pz))
    return [
        CheckResult(f"{name}: variational inequality", vi <= tol, vi, tol),
        CheckResult(f"{name}: Pythagorean property", pyth <= tol, pyth, tol),
        CheckResult(f"{name}: non-expansiveness", nonexp <= tol, nonexp, tol),
        CheckResult(f"{name}: membership", member <= tol, member, tol),
        CheckResult(f"{name}: idempotence", idem <= tol, idem, tol),
    ]


def projection_suite(n: int, *, body_project: Callable | None = None,
                     region_project: Callable | None = None, seed: int = 0,
                     tol: float = 1e-9) -> list[CheckResult]:
    """Projection properties over ``n`` random trials per primitive and per region.

    Each primitive is tested with ``n/2`` trials in two dimensions, regions
    likewise; the Dykstra box check uses ``n/10`` boxes written as halfspaces.
    """
    rng = np.random.default_rng(seed)
    body_project = body_project or (lambda p, K: K.project(p))
    region_project = region_project or (lambda p, K: project_region(p, K))
    checks: list[CheckResult] = []
    for kind in ("halfspace", "ball", "box"):
        for d in (2, 5):
            checks += _projection_checks(f"{kind} d={d}", n // 2, d,
                                         lambda r, k=kind, d=d: (_random_body(k, d, r), None),
                                         body_project, rng, tol)
    checks += _projection_checks("region d=2", n // 2, 2, lambda r: _random_region(2, r),
                                 region_project, rng, tol)
    checks += _projection_checks("region d=4", n // 2, 4, lambda r: _random_region(4, r),
                                 region_project, rng, tol)

    # Dykstra on a box written as 2d halfspaces against the closed form
    worst = 0.0
    for _ in range(n // 10):
        d = int(rng.integers(1, 6))
        box = _random_body("box", d, rng)
        faces = []
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            faces += [Halfspace(e, box.hi[i]), Halfspace(-e, -box.lo[i])]
        p = rng.normal(scale=3.0, size=d)
        got = region_project(p, FeasibleRegion(tuple(faces)))
        worst = max(worst, float(np.max(np.abs(got - box.project(p)))))
    checks.append(CheckResult("box as halfspaces vs closed form", worst <= 1e-6, worst, 1e-6))
    return checks


def verify_suite(level: str = "fast", *, body_project: Callable | None = None,
                 region_project: Callable | None = None, lift_fn: Callable | None = None,
                 seed: int = 0) -> VerifyReport:
    """Run the projection, lift, constraint-violation and regret property checks.

    ``level="fast"`` uses 10^3 trials per projection primitive and short
    runs; ``"full"`` uses 10^4 trials and longer runs. The keyword hooks
    replace the projection primitives, the region projection or the lift,
    which is how mutation tests confirm that each check can fail.
    """
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    n = 1_000 if level == "fast" else 10_000
    T_short = 128 if level == "fast" else 512
    lift_fn = lift_fn or lift
    checks = projection_suite(n, body_project=body_project, region_project=region_project,
                              seed=seed)
    rng = np.random.default_rng(seed + 1)

    # oplus norm axioms
    tri = hom = neg = -math.inf
    for _ in range(n):
        d = int(rng.integers(1, 6))
        u, v = rng.standard_normal(d), rng.standard_normal(d)
        s, r, c = rng.normal(), rng.normal(), rng.normal() * 3
        nu = oplus_norm(u, s)
        neg = max(neg, -nu)
        hom = max(hom, abs(oplus_norm(c * u, c * s) - abs(c) * nu) / (1 + abs(c) * nu))
        tri = max(tri, (oplus_norm(u + v, s + r) - nu - oplus_norm(v, r)) / (1 + nu))
    for name, w in (("oplus norm: nonnegativity", neg), ("oplus norm: homogeneity", hom),
                    ("oplus norm: triangle inequality", tri)):
        checks.append(CheckResult(name, w <= 1e-12, w, 1e-12))

    # runs: CCV chain, regret dominance, lift contraction, quasi/ball indifference
    cases = [("drifting-quadratic", "shrinking-halfspaces", "strongly-convex"),
             ("rotating-linear", "mixed-quasiball", "sqrt-decay"),
             ("drifting-quadratic", "mixed-quasiball", "strongly-convex"),
             ("rotating-linear", "shrinking-halfspaces", "sqrt-decay")]
    chain = dom = sc = tails = quasi = -math.inf
    for i, (loss, cons, kind) in enumerate(cases):
        inst = gen_instance(GeneratorSpec(loss, cons, 2, T_short, seed + 17 * i + 1))
        sched = (StepSchedule.strongly_convex(1.0) if kind == "strongly-convex"
                 else StepSchedule.sqrt_decay(inst.D, inst.G))
        tr = run(inst, sched)
        chain = max(chain, ccv(tr) - inst.G * movement(tr))
        opt = offline_optimum(inst)
        dom = max(dom, regret(tr, opt.value) - regret_bound_lemma(sched, inst.D, inst.G,
                                                                  inst.curvatures(), inst.T))
        lifted = lift_fn(tr)
        rep = check_self_contracted(lifted, "oplus", "exhaustive")
        sc = max(sc, rep.max_violation / inst.D)
        # R_t - R_{t+1} must be the round's perturbation norm, with R_{T+1} = 0
        R = np.array([a.tail for a in lifted])
        e = np.array([r.e_norm for r in tr.records])
        tails = max(tails, abs(R[-1]), float(np.max(np.abs(R[:-1] - R[1:] - e))) if e.size else 0.0)
        if cons == "mixed-quasiball":
            a = run(with_ball_kind(inst, "ball-distance"), sched).iterates()
            b = run(with_ball_kind(inst, "quasi-ball"), sched).iterates()
            quasi = max(quasi, float(np.max(np.abs(a - b))))
    checks += [
        CheckResult("ccv <= G * movement", chain <= 1e-6, chain, 1e-6),
        CheckResult("regret <= step-size bound", dom <= 1e-6, dom, 1e-6),
        CheckResult("lifted sequence self-contracted", sc <= 1e-8, sc, 1e-8, "relative to D"),
        CheckResult("lift tails are suffix sums", tails <= 1e-9, tails, 1e-9),
        CheckResult("ball-distance vs quasi-ball iterates", quasi <= 1e-12, quasi, 1e-12),
    ]
    return VerifyReport(level, checks)
