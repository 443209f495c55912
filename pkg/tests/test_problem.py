import json
import numpy as np
import pytest

from npogd.errors import GenerationError
from npogd.geometry import Ball, Box, Halfspace
from npogd.problem import (
    AffineConstraint,
    BallConstraint,
    GeneratorSpec,
    Instance,
    LinearLoss,
    MaxAffineLoss,
    QuadraticLoss,
    QuasiBallConstraint,
    eval_constraint,
    eval_loss,
    gen_instance,
    reveal_times,
    sublevel_body,
    subgrad,
    with_ball_kind,
)

ALL_FAMILIES = [(loss, cons) for loss in ("rotating-linear", "drifting-quadratic")
                for cons in ("shrinking-halfspaces", "mixed-quasiball")]


def test_loss_values():
    assert eval_loss(LinearLoss([1, 2]), [3, 1]) == 5
    assert eval_loss(QuadraticLoss(2, [0, 0]), [1, 1]) == 2
    assert eval_loss(MaxAffineLoss([[1, 0], [-1, 0]], [0, 0]), [0.5, 9]) == 0.5


def test_subgradients():
    np.testing.assert_array_equal(subgrad(QuadraticLoss(2, [0, 0]), [1, 0]), [2, 0])
    np.testing.assert_array_equal(subgrad(LinearLoss([1, 2]), [7, -3]), [1, 2])
    # ties go to the first piece
    np.testing.assert_array_equal(subgrad(MaxAffineLoss([[1, 0], [-1, 0]], [0, 0]), [0, 0]), [1, 0])


def test_constraint_values():
    assert eval_constraint(AffineConstraint([1, 0], 1), [2, 0]) == 1
    assert eval_constraint(BallConstraint([0, 0], 1), [0, 3]) == 2
    assert eval_constraint(QuasiBallConstraint([0, 0], 4), [9, 0]) == pytest.approx(1.0, abs=1e-15)


def test_sublevel_bodies():
    assert sublevel_body(AffineConstraint([1, 0], 1)) == Halfspace([1, 0], 1)
    assert sublevel_body(QuasiBallConstraint([0, 0], 4)) == Ball([0, 0], 4)
    point = sublevel_body(BallConstraint([1, 1], 0))
    assert point.residual(np.array([1.0, 1.0])) <= 0
    assert point.residual(np.array([1.0, 1.0 + 1e-6])) > 0


def test_curvatures():
    assert QuadraticLoss(0.5, [0]).curvature == 0.5
    assert LinearLoss([1]).curvature == 0.0
    assert MaxAffineLoss([[1]], [0]).curvature == 0.0
    with pytest.raises(ValueError):
        QuadraticLoss(0.0, [0])


def test_sublevel_sets_match_sampled_membership():
    rng = np.random.default_rng(3)
    for g in (AffineConstraint([1, -2], 0.3), BallConstraint([0.2, 0.1], 0.7),
              QuasiBallConstraint([0.2, 0.1], 0.7)):
        body = sublevel_body(g)
        for x in rng.uniform(-2, 2, size=(1000, 2)):
            assert (g.value(x) <= 0) == (body.residual(x) <= 0)


def _subgrad_norms(fn, base, rng, n=1000):
    pts = rng.uniform(base.lo_arr, base.hi_arr, size=(n, base.dim))
    if hasattr(fn, "subgrad"):
        return [np.linalg.norm(fn.subgrad(x)) for x in pts]
    # constraints: central finite differences of the value
    h = 1e-7
    out = []
    for x in pts:
        g = [(fn.value(x + h * e) - fn.value(x - h * e)) / (2 * h) for e in np.eye(base.dim)]
        out.append(np.linalg.norm(g))
    return out


@pytest.mark.parametrize("loss,cons", ALL_FAMILIES)
def test_declared_lipschitz_constants_hold(loss, cons):
    inst = gen_instance(GeneratorSpec(loss, cons, d=2, T=64, seed=11))
    rng = np.random.default_rng(0)
    for fn in {id(f): f for f in (*inst.losses, *inst.constraints)}.values():
        declared = fn.lipschitz(inst.base)
        assert declared <= inst.G * (1 + 1e-12)
        assert max(_subgrad_norms(fn, inst.base, rng)) <= declared * (1 + 1e-6) + 1e-9


def test_generation_is_deterministic():
    spec = GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=8, seed=7)
    assert gen_instance(spec).to_json() == gen_instance(spec).to_json()
    other = gen_instance(spec.with_(seed=8))
    assert other.to_json() != gen_instance(spec).to_json()


@pytest.mark.parametrize("loss,cons", ALL_FAMILIES)
@pytest.mark.parametrize("base", ["box", "ball"])
def test_anchor_keeps_margin(loss, cons, base):
    m = 0.1
    inst = gen_instance(GeneratorSpec(loss, cons, d=3, T=300, seed=5,
                                      params={"margin": m, "base": base}))
    for g in inst.constraints:
        if g.kind != "quasi-ball":
            assert g.value(inst.anchor) <= -m + 1e-12
        assert sublevel_body(g).residual(inst.anchor) <= -m + 1e-12
    assert inst.base.residual(inst.anchor) <= 0


def test_shrinking_halfspaces_margin():
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=128, seed=1,
                                      params={"margin": 0.1}))
    assert max(g.value(inst.anchor) for g in inst.constraints) <= -0.1 + 1e-12


def test_rotating_linear_has_unit_slopes():
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=50, seed=2))
    for f in inst.losses:
        assert f.lipschitz(inst.base) == pytest.approx(1.0, abs=1e-12)
    assert inst.G == pytest.approx(max(1.0, max(g.lipschitz(inst.base) for g in inst.constraints)))


def test_regions_shrink():
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=512, seed=4))
    pool = list(dict.fromkeys(inst.constraints))
    assert len(pool) > 1
    # every newly revealed body cuts away part of what was left
    region = inst.final_region()
    assert len(region.bodies) == len(pool) + 1


def test_reveal_times_are_increasing():
    for pacing in ("sqrt", "log", "uniform"):
        times = reveal_times(32, pacing, 8192, 1000)
        assert times[0] == 1
        assert all(b > a for a, b in zip(times, times[1:]))
    with pytest.raises(GenerationError):
        reveal_times(4, "cubic", 100, 100)


def test_quasi_and_ball_same_sign():
    rng = np.random.default_rng(9)
    for _ in range(50):
        c, r = rng.normal(size=2), rng.uniform(0.1, 2)
        q, b = QuasiBallConstraint(c, r), BallConstraint(c, r)
        assert q.sublevel_body() == b.sublevel_body()
        for x in rng.uniform(-3, 3, size=(40, 2)):
            assert np.sign(q.value(x)) == np.sign(b.value(x))


def test_with_ball_kind_keeps_regions():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=64, seed=3))
    quasi = with_ball_kind(inst, "quasi-ball")
    ball = with_ball_kind(inst, "ball-distance")
    assert all(g.kind == "quasi-ball" for g in quasi.constraints)
    assert all(g.kind == "ball-distance" for g in ball.constraints)
    assert quasi.final_region().bodies == ball.final_region().bodies
    assert quasi.G >= inst.G and ball.G >= inst.G


def test_json_round_trip():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=40, seed=3))
    again = Instance.from_json(inst.to_json())
    assert again.to_json() == inst.to_json()
    doc = json.loads(inst.to_json())
    assert {"dimension", "base", "losses", "constraints", "anchor", "D", "G", "seed"} <= set(doc)
    # the pool is stored once
    assert len(doc["constraint_pool"]) <= 32


def test_prefix_and_start_points():
    inst = gen_instance(GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=20, seed=3))
    assert inst.prefix(5).T == 5
    corner = inst.start_point("corner")
    assert set(np.abs(corner)) == {1.0}
    np.testing.assert_array_equal(inst.start_point("anchor"), inst.anchor)
    with pytest.raises(ValueError):
        inst.start_point([5.0, 0.0])
    with pytest.raises(ValueError):
        inst.start_point("middle")


def test_instance_rejects_broken_witness():
    base = Box([-1, -1], [1, 1])
    losses = (LinearLoss([1, 0]),)
    with pytest.raises(GenerationError):
        Instance(2, base, losses, (AffineConstraint([1, 0], -0.5),), np.zeros(2), base.diameter, 1.0)
    with pytest.raises(GenerationError):
        Instance(2, base, losses, (AffineConstraint([1, 0], 0.5),), np.zeros(2), 1.0, 1.0)
    with pytest.raises(GenerationError):
        Instance(2, base, losses, (AffineConstraint([1, 0], 0.5),), np.zeros(2), base.diameter, 0.5)
    with pytest.raises(GenerationError):
        Instance(2, base, losses, (), np.zeros(2), base.diameter, 1.0)


@pytest.mark.parametrize("params", [{"margin": 1.5}, {"margin": -0.1}, {"k": 0},
                                    {"half_width": 0.0}, {"base": "simplex"}, {"mu": 0.0}])
def test_infeasible_parameterizations(params):
    with pytest.raises(GenerationError):
        gen_instance(GeneratorSpec("drifting-quadratic", "shrinking-halfspaces", d=2, T=10, seed=0,
                                   params=params))


def test_generator_spec_validation():
    with pytest.raises(GenerationError):
        GeneratorSpec("spiral", "shrinking-halfspaces", d=2, T=10, seed=0)
    with pytest.raises(GenerationError):
        GeneratorSpec("rotating-linear", "wedges", d=2, T=10, seed=0)
    with pytest.raises(GenerationError):
        GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=10, seed=0, params={"bogus": 1})
    with pytest.raises(GenerationError):
        GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=0, T=10, seed=0)
    with pytest.raises(GenerationError):
        GeneratorSpec("rotating-linear", "shrinking-halfspaces", d=2, T=10, seed=-1)


def test_d1_generation():
    inst = gen_instance(GeneratorSpec("rotating-linear", "mixed-quasiball", d=1, T=30, seed=1))
    assert inst.dimension == 1 and inst.T == 30
