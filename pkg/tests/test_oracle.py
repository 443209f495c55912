import numpy as np
import pytest

from npogd.errors import OracleError
from npogd.geometry import Box
from npogd.oracle import grid_search_optimum, offline_optimum, total_loss
from npogd.problem import (
    AffineConstraint,
    BallConstraint,
    GeneratorSpec,
    Instance,
    LinearLoss,
    MaxAffineLoss,
    QuadraticLoss,
    gen_instance,
)


def _instance(base, losses, constraints, anchor):
    G = max(fn.lipschitz(base) for fn in (*losses, *constraints))
    D = base.diameter
    return Instance(base.dim, base, tuple(losses), tuple(constraints), np.asarray(anchor, float), D, G)


@pytest.mark.parametrize("seed", range(5))
def test_quadratics_over_box_clamp_the_mean(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    base = Box(-np.ones(d), np.ones(d))
    centers = rng.normal(scale=1.5, size=(12, d))
    # a loose constraint keeps S_T equal to the box
    slack = AffineConstraint(np.eye(d)[0], 10.0)
    inst = _instance(base, [QuadraticLoss(1.0, z) for z in centers], [slack] * 12, np.zeros(d))
    res = offline_optimum(inst)
    np.testing.assert_allclose(res.x_star, np.clip(centers.mean(axis=0), -1, 1), atol=1e-8, rtol=0)
    assert res.stationarity_residual <= 1e-8


def test_linear_over_unit_square():
    base = Box([0, 0], [1, 1])
    inst = _instance(base, [LinearLoss([1.0, 0.0])], [AffineConstraint([1, 1], 5.0)], [0.5, 0.5])
    res = offline_optimum(inst)
    assert res.x_star[0] == pytest.approx(0.0, abs=1e-8)
    assert res.value == pytest.approx(0.0, abs=1e-8)


def test_optimum_is_feasible_and_beats_the_anchor():
    for seed in range(6):
        inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=3, T=64, seed=seed))
        res = offline_optimum(inst)
        assert inst.final_region().residuals(res.x_star).max() <= 1e-8
        assert res.value <= total_loss(inst, inst.anchor) + 1e-12
        assert res.vi_residual <= 1e-6


def test_nonsmooth_total():
    base = Box([-1, -1], [1, 1])
    hinge = MaxAffineLoss([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]], [0.0, 0.0, -0.5])
    inst = _instance(base, [hinge] * 3, [AffineConstraint([0, 1], 0.8)] * 3, [0.0, 0.0])
    res = offline_optimum(inst, tol=1e-6)
    # the minimum of max(|x1|, x2 - 0.5) is 0, attained on x1 = 0
    assert res.value == pytest.approx(0.0, abs=1e-4)
    assert abs(res.x_star[0]) <= 1e-4


def test_iteration_budget_exhaustion():
    base = Box([-1, -1], [1, 1])
    ball = BallConstraint([3.0, 0.0], 3.2)
    kink = MaxAffineLoss([[1.0, 0.3], [-1.0, 0.2]], [0.0, 0.1])
    inst = _instance(base, [kink], [ball], [0.5, 0.0])
    with pytest.raises(OracleError) as err:
        offline_optimum(inst, tol=1e-12, max_iters=2)
    assert np.all(np.isfinite(err.value.best_iterate))
    assert err.value.residual > 1e-14


def test_grid_agrees_with_closed_form():
    base = Box([-1, -1], [1, 1])
    z = np.array([0.3, -0.2])
    inst = _instance(base, [QuadraticLoss(2.0, z)], [AffineConstraint([1, 0], 0.9)], [0, 0])
    x, val = grid_search_optimum(inst, 1e-3)
    assert val <= 2.0 * 2 * 1e-6
    np.testing.assert_allclose(x, z, atol=1e-3)


def test_grid_matches_oracle_on_generated_instance():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "mixed-quasiball", d=2, T=16, seed=4))
    res = offline_optimum(inst)
    x, val = grid_search_optimum(inst, 2e-3)
    lo, hi = x - 0.01, x + 0.01
    x, val = grid_search_optimum(inst, 1e-4, window=(lo, hi))
    assert res.value <= val + 1e-9
    assert val - res.value <= 1e-3


def test_grid_errors():
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "shrinking-halfspaces", d=3, T=4, seed=1))
    with pytest.raises(ValueError):
        grid_search_optimum(inst, 0.1)
    inst = gen_instance(GeneratorSpec("drifting-quadratic", "shrinking-halfspaces", d=2, T=4, seed=1))
    with pytest.raises(ValueError):
        grid_search_optimum(inst, 0.0)
    with pytest.raises(ValueError):
        grid_search_optimum(inst, 0.1, window=([5, 5], [6, 6]))
    # a tiny feasible sliver between two grid lines
    base = Box([-1.0], [1.0])
    tight = _instance(base, [LinearLoss([1.0])] * 2,
                      [AffineConstraint([1.0], 0.01), AffineConstraint([-1.0], -0.005)], [0.007])
    with pytest.raises(OracleError):
        grid_search_optimum(tight, 0.5)
