import json

import numpy as np
import pytest

from npogd import geometry
from npogd.algorithm import RunTrace, StepSchedule, npogd_round, run, step_size
from npogd.analysis import ccv, check_self_contracted
from npogd.errors import ProjectionError, RunError
from npogd.geometry import Box, FeasibleRegion, Halfspace
from npogd.problem import AffineConstraint, GeneratorSpec, Instance, LinearLoss, gen_instance

FAMILIES = [("rotating-linear", "shrinking-halfspaces", StepSchedule.sqrt_decay),
            ("rotating-linear", "mixed-quasiball", StepSchedule.sqrt_decay),
            ("drifting-quadratic", "shrinking-halfspaces", None),
            ("drifting-quadratic", "mixed-quasiball", None)]


def _schedule(inst, factory):
    return factory(inst.D, inst.G) if factory else StepSchedule.strongly_convex(1.0)


def test_step_sizes():
    assert step_size(StepSchedule.sqrt_decay(2, 1), 4) == 1.0
    assert step_size(StepSchedule.strongly_convex(0.5), 10) == pytest.approx(0.2, abs=1e-16)
    assert step_size(StepSchedule.sqrt_decay(1, 1), 1) == 1.0
    assert step_size(StepSchedule.constant(0.3), 99) == 0.3
    with pytest.raises(ValueError):
        step_size(StepSchedule.sqrt_decay(1, 1), 0)


def test_builtin_schedules_are_positive_and_nonincreasing():
    for s in (StepSchedule.sqrt_decay(2.8, 1.3), StepSchedule.strongly_convex(0.7)):
        eta = [s(t) for t in range(1, 500)]
        assert min(eta) > 0
        assert all(b <= a for a, b in zip(eta, eta[1:]))


@pytest.mark.parametrize("kwargs", [dict(kind="sqrt-decay", D=1.0), dict(kind="strongly-convex", mu=0.0),
                                    dict(kind="constant", eta=-1.0), dict(kind="adagrad")])
def test_bad_schedules(kwargs):
    with pytest.raises(ValueError):
        StepSchedule(**kwargs)


def _interval():
    return FeasibleRegion((Box([-1.0], [1.0]),))


def test_round_by_hand_full_step():
    x2, region, rec = npogd_round([1.0], _interval(), LinearLoss([1.0]), AffineConstraint([1.0], 0.5), 1.0)
    assert x2[0] == pytest.approx(0.0, abs=1e-12)
    assert rec.violation == 0.5 and rec.move == pytest.approx(1.0, abs=1e-12)
    assert region.bodies[-1] == Halfspace([1.0], 0.5)


def test_round_by_hand_projection_active():
    x2, _, rec = npogd_round([1.0], _interval(), LinearLoss([1.0]), AffineConstraint([1.0], 0.5), 0.1)
    assert x2[0] == pytest.approx(0.5, abs=1e-12)
    assert rec.violation == 0.5 and rec.move == pytest.approx(0.5, abs=1e-12)
    assert rec.e_norm == pytest.approx(0.1)


def test_interior_round_moves_by_the_step():
    x2, _, rec = npogd_round([0.0, 0.0], FeasibleRegion((Box([-1, -1], [1, 1]),)),
                             LinearLoss([0.6, -0.8]), AffineConstraint([1, 0], 0.9), 0.01)
    np.testing.assert_allclose(x2, [-0.006, 0.008], atol=1e-15)
    assert rec.move == pytest.approx(rec.e_norm, abs=1e-15)
    assert rec.violation == 0.0


def test_round_attaches_index_to_projection_errors():
    region = FeasibleRegion((Box([-1.0], [1.0]), Halfspace([1.0], -0.5)))
    with pytest.raises(ProjectionError) as err:
        npogd_round([-0.5], region, LinearLoss([1.0]), AffineConstraint([-1.0], -0.5), 0.1, t=7,
                    max_sweeps=50)
    assert err.value.round_index == 7


def test_empty_horizon():
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=0, seed=1))
    tr = run(inst, StepSchedule.sqrt_decay(inst.D, inst.G))
    assert tr.T == 0
    np.testing.assert_array_equal(tr.x_final, inst.start_point("corner"))


@pytest.mark.parametrize("loss,cons,factory", FAMILIES)
def test_trace_invariants(loss, cons, factory):
    inst = gen_instance(GeneratorSpec(loss, cons, d=2, T=200, seed=13))
    tr = run(inst, _schedule(inst, factory))
    xs = tr.iterates()
    assert inst.base.residual(xs[0]) <= 0
    region = FeasibleRegion((inst.base,))
    for t, rec in enumerate(tr.records, start=1):
        region = region.append(inst.constraints[t - 1].sublevel_body())
        # x_{t+1} lies in S_t: feasibility lags one round
        assert geometry.contains(region, xs[t], tol=1e-9)
        assert inst.constraints[t - 1].value(xs[t]) <= 1e-9
        assert rec.violation >= 0
        assert rec.e_norm <= rec.eta * inst.G + 1e-12
        assert rec.violation <= inst.G * rec.move + 1e-8
    assert tr.final_region.bodies == inst.final_region().bodies


def test_trace_ccv_matches_recomputation():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=256, seed=7))
    tr = run(inst, StepSchedule.strongly_convex(1.0))
    xs = tr.iterates()
    direct = sum(max(g.value(x), 0.0) for g, x in zip(inst.constraints, xs[:-1]))
    assert ccv(tr) == pytest.approx(direct, rel=1e-12, abs=1e-15)


def test_runs_are_deterministic():
    inst = gen_instance(GeneratorSpec("rotating-linear", "mixed-quasiball", d=3, T=100, seed=2))
    s = StepSchedule.sqrt_decay(inst.D, inst.G)
    assert run(inst, s).to_csv() == run(inst, s).to_csv()


def test_causality_under_splicing():
    a = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=80, seed=21))
    b = gen_instance(GeneratorSpec("drifting-quadratic", "shrinking-halfspaces", d=2, T=80, seed=22))
    k = 40
    spliced = Instance(2, a.base, a.losses[:k] + b.losses[k:], a.constraints[:k] + a.constraints[k - 1:k] * (80 - k),
                       a.anchor, a.D, max(a.G, b.G))
    s = StepSchedule.constant(0.05)
    ra, rs = run(a, s), run(spliced, s)
    for r1, r2 in zip(ra.records[:k], rs.records[:k]):
        np.testing.assert_array_equal(r1.x, r2.x)
        assert (r1.loss, r1.violation, r1.move) == (r2.loss, r2.violation, r2.move)
    assert any(r1.loss != r2.loss for r1, r2 in zip(ra.records[k:], rs.records[k:]))


@pytest.mark.parametrize("seed", range(4))
def test_zero_step_iterates_are_self_contracted(seed):
    inst = gen_instance(GeneratorSpec("rotating-linear", "mixed-quasiball", d=2, T=256, seed=seed,
                                      params={"reveal": "uniform"}))
    tr = run(inst, StepSchedule.constant(0.0))
    xs = tr.iterates()
    region = FeasibleRegion((inst.base,))
    for t, rec in enumerate(tr.records, start=1):
        region = region.append(inst.constraints[t - 1].sublevel_body())
        assert rec.e_norm == 0.0
        assert rec.move == pytest.approx(np.linalg.norm(geometry.project_region(xs[t - 1], region) - xs[t - 1]),
                                         abs=1e-9)
    rep = check_self_contracted(xs, "euclidean", "exhaustive")
    assert rep.exhaustive and rep.max_violation <= 1e-8 * inst.D


def test_run_error_carries_partial_trace(monkeypatch):
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=10, seed=3))
    real = geometry.project_region_info
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 4:
            raise ProjectionError("stuck", args[0], 1.0, 5)
        return real(*args, **kwargs)

    monkeypatch.setattr("npogd.algorithm.project_region_info", flaky)
    with pytest.raises(RunError) as err:
        run(inst, StepSchedule.sqrt_decay(inst.D, inst.G))
    assert err.value.partial.T == 3
    assert err.value.cause.round_index == 4


def test_sqrt_decay_constant_mismatch_only_warns(caplog):
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=5, seed=3))
    with caplog.at_level("WARNING"):
        tr = run(inst, StepSchedule.sqrt_decay(inst.D * 2, inst.G))
    assert tr.T == 5
    assert "differ" in caplog.text


def test_trace_serialization_round_trip():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=30, seed=4))
    tr = run(inst, StepSchedule.strongly_convex(1.0), "anchor")
    again = RunTrace.from_dict(json.loads(tr.to_json()))
    assert again.to_csv() == tr.to_csv()
    lines = tr.to_csv().splitlines()
    assert lines[0] == "t,x0,x1,loss,violation,eta,e0,e1,e_norm,move,proj_residual"
    assert len(lines) == 31
    assert float(lines[1].split(",")[1]) == tr.records[0].x[0]
