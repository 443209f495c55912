"""Nested projected online gradient descent.

Each round plays ``x_t``, then reads ``f_t`` and ``g_t``, intersects the
running feasible region with ``{g_t <= 0}`` and sets
``x_{t+1} = Proj_{S_t}(x_t - eta_t h_t)`` with ``h_t`` a subgradient of ``f_t``
at ``x_t``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ProjectionError, RunError
from .geometry import DEFAULT_MAX_SWEEPS, DEFAULT_TOL, FeasibleRegion, as_point, project_region_info
from .problem import ConstraintFn, Instance, LossFn

__all__ = ["StepSchedule", "RoundRecord", "RunTrace", "step_size", "npogd_round", "run"]

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("sqrt-decay", "strongly-convex", "constant")


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes: ``D/(G sqrt t)``, ``1/(mu t)`` or a constant ``eta``."""

    kind: str
    D: float | None = None
    G: float | None = None
    mu: float | None = None
    eta: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; choose from {SCHEDULE_KINDS}")
        if self.kind == "sqrt-decay" and not (self.D and self.G and self.D > 0 and self.G > 0):
            raise ValueError("sqrt-decay needs D > 0 and G > 0")
        if self.kind == "strongly-convex" and not (self.mu and self.mu > 0):
            raise ValueError("strongly-convex schedule needs mu > 0")
        if self.kind == "constant" and (self.eta is None or not 0 <= self.eta < math.inf):
            raise ValueError("constant schedule needs a finite eta >= 0")

    @classmethod
    def sqrt_decay(cls, D: float, G: float) -> "StepSchedule":
        return cls("sqrt-decay", D=D, G=G)

    @classmethod
    def strongly_convex(cls, mu: float) -> "StepSchedule":
        return cls("strongly-convex", mu=mu)

    @classmethod
    def constant(cls, eta: float) -> "StepSchedule":
        return cls("constant", eta=eta)

    def __call__(self, t: int) -> float:
        return step_size(self, t)

    def to_dict(self) -> dict:
        return {k: v for k, v in (("kind", self.kind), ("D", self.D), ("G", self.G),
                                  ("mu", self.mu), ("eta", self.eta)) if v is not None}


def step_size(s: StepSchedule, t: int) -> float:
    if t < 1:
        raise ValueError(f"step sizes are defined for t >= 1, got {t}")
    if s.kind == "sqrt-decay":
        return s.D / (s.G * math.sqrt(t))
    if s.kind == "strongly-convex":
        return 1.0 / (s.mu * t)
    return float(s.eta)


@dataclass
class RoundRecord:
    t: int
    x: np.ndarray          # action played in round t
    loss: float            # f_t(x_t)
    violation: float       # (g_t(x_t))^+
    eta: float
    e: np.ndarray          # eta_t * h_t, before projection
    e_norm: float
    move: float            # ||x_{t+1} - x_t||
    proj_residual: float   # largest membership residual of x_{t+1} in S_t


@dataclass
class RunTrace:
    instance_id: str
    seed: int
    records: list[RoundRecord]
    x_final: np.ndarray
    final_region: FeasibleRegion
    x_first: np.ndarray = field(default=None)

    def __post_init__(self) -> None:
        if self.x_first is None:
            self.x_first = self.records[0].x if self.records else self.x_final

    @property
    def T(self) -> int:
        return len(self.records)

    def iterates(self) -> np.ndarray:
        """x_1 .. x_{T+1} as a (T+1, d) array."""
        return np.vstack([r.x for r in self.records] + [self.x_final])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def to_csv(self) -> str:
        """One row per round with every RoundRecord field; vectors are split per coordinate."""
        d = self.x_final.size
        header = (["t"] + [f"x{i}" for i in range(d)]
                  + ["loss", "violation", "eta"] + [f"e{i}" for i in range(d)]
                  + ["e_norm", "move", "proj_residual"])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        f = _fmt
        for r in self.records:
            w.writerow([r.t] + [f(v) for v in r.x] + [f(r.loss), f(r.violation), f(r.eta)]
                       + [f(v) for v in r.e] + [f(r.e_norm), f(r.move), f(r.proj_residual)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "seed": self.seed,
            "records": [
                {"t": r.t, "x": r.x.tolist(), "loss": r.loss, "violation": r.violation,
                 "eta": r.eta, "e": r.e.tolist(), "e_norm": r.e_norm, "move": r.move,
                 "proj_residual": r.proj_residual}
                for r in self.records
            ],
            "x_first": np.asarray(self.x_first).tolist(),
            "x_final": self.x_final.tolist(),
            "final_region": self.final_region.to_list(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "RunTrace":
        records = [RoundRecord(r["t"], np.array(r["x"]), r["loss"], r["violation"], r["eta"],
                               np.array(r["e"]), r["e_norm"], r["move"], r["proj_residual"])
                   for r in d["records"]]
        return cls(d["instance_id"], d["seed"], records, np.array(d["x_final"]),
                   FeasibleRegion.from_list(d["final_region"]), np.array(d["x_first"]))


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def npogd_round(x_t, region: FeasibleRegion, f_t: LossFn, g_t: ConstraintFn, eta: float,
                t: int = 1, tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS):
    """One round; returns ``(x_next, region_t, record)``.

    ``x_t`` is fixed before ``f_t`` and ``g_t`` are looked at.

    Raises:
        ProjectionError: with ``round_index`` set to ``t``.
    """
    x_t = as_point(x_t, region.dim)
    loss = f_t.value(x_t)
    violation = max(g_t.value(x_t), 0.0)
    region_t = region.append(g_t.sublevel_body())
    h = f_t.subgrad(x_t)
    e = eta * h
    try:
        info = project_region_info(x_t - e, region_t, tol, max_sweeps)
    except ProjectionError as err:
        err.round_index = t
        raise
    x_next = info.point
    record = RoundRecord(
        t=t,
        x=x_t,
        loss=loss,
        violation=violation,
        eta=float(eta),
        e=e,
        e_norm=float(np.linalg.norm(e)),
        move=float(np.linalg.norm(x_next - x_t)),
        proj_residual=info.residual,
    )
    return x_next, region_t, record


def run(inst: Instance, s: StepSchedule, x_1="corner", tol: float = DEFAULT_TOL,
        max_sweeps: int = DEFAULT_MAX_SWEEPS) -> RunTrace:
    """Run NP-OGD on ``inst`` for its full horizon.

    ``x_1`` is ``"corner"`` (vertex of the base set farthest from the anchor),
    ``"anchor"``, or explicit coordinates inside the base set.

    Raises:
        RunError: wrapping the round's error, with the partial trace attached.
    """
    if s.kind == "sqrt-decay" and (not math.isclose(s.D, inst.D) or not math.isclose(s.G, inst.G)):
        log.warning("sqrt-decay constants (D=%g, G=%g) differ from the instance's (D=%g, G=%g)",
                    s.D, s.G, inst.D, inst.G)
    x = inst.start_point(x_1)
    x_first = x.copy()
    region = FeasibleRegion((inst.base,))
    records: list[RoundRecord] = []
    for t in range(1, inst.T + 1):
        try:
            x, region, rec = npogd_round(x, region, inst.losses[t - 1], inst.constraints[t - 1],
                                         step_size(s, t), t, tol, max_sweeps)
        except ProjectionError as err:
            partial = RunTrace(inst.name, inst.seed, records, x, region, x_first)
            raise RunError(f"round {t}: {err}", partial, err) from err
        records.append(rec)
    return RunTrace(inst.name, inst.seed, records, x, region, x_first)
