import numpy as np
import pytest

from oracles import brute_impulse
from qvikit.elliptic import OperatorSpec
from qvikit.errors import GridMismatchError, InnerSolveDiverged
from qvikit.grid import GridSpec
from qvikit.obstacles import (
    CoupledObstacle,
    CoupledObstacleSpec,
    ImpulseObstacle,
    ImpulseObstacleSpec,
    check_increasing,
    check_scaling,
    make_obstacle,
    phi_coupled,
    phi_impulse,
    thermoforming_g,
)


@pytest.mark.parametrize("grid", [GridSpec(1, (1.0,), 12), GridSpec(2, (1.0, 0.5), 6),
                                  GridSpec(1, (2.0,), 9, "neumann")])
def test_impulse_matches_brute_force(grid, rng):
    spec = ImpulseObstacleSpec(k=0.3, c0_alpha=0.7, c0_gamma=0.6)
    for _ in range(5):
        y = rng.normal(size=grid.size)
        np.testing.assert_allclose(phi_impulse(y, spec, grid),
                                   brute_impulse(y, grid, 0.3, 0.7, 0.6), rtol=1e-14)


def test_impulse_of_zero_uses_boundary():
    # min over shifts of c0 + 0 is attained at zero shift: Phi(0) = k
    g = GridSpec(1, (1.0,), 10)
    np.testing.assert_allclose(phi_impulse(np.zeros(8), ImpulseObstacleSpec(k=0.4), g), 0.4)


def test_impulse_rightmost_unknown_sees_only_itself_and_boundary():
    g = GridSpec(1, (1.0,), 6)
    spec = ImpulseObstacleSpec(k=1.0, c0_alpha=2.0, c0_gamma=1.0)
    y = np.array([5.0, 5.0, 5.0, 5.0])
    # last unknown at x=0.8: min(0 + 5, 2*0.2 + 0) + 1
    assert phi_impulse(y, spec, g)[-1] == pytest.approx(1.4)


@pytest.mark.parametrize("kwargs", [dict(k=0.0), dict(c0_alpha=-1.0), dict(c0_gamma=1.5),
                                    dict(c0_gamma=0.0)])
def test_impulse_spec_validation(kwargs):
    with pytest.raises(ValueError):
        ImpulseObstacleSpec(**kwargs)


def test_impulse_shape_checked():
    with pytest.raises(GridMismatchError):
        ImpulseObstacle(ImpulseObstacleSpec(), GridSpec(1, (1.0,), 6))(np.zeros(5))


def test_thermoforming_nonlinearity_values():
    np.testing.assert_array_equal(thermoforming_g([-1.0, 0.0, 0.25, 1.0, 3.0]),
                                  [-1.0, -1.0, -0.75, 0.0, 0.0])


def coupled(variant="pos_part_gap", n=30, **kw):
    g = GridSpec(1, (1.0,), n + 2)
    spec = CoupledObstacleSpec(OperatorSpec(a_react=1.0), g_variant=variant, **kw)
    return CoupledObstacle(spec, g), g


@pytest.mark.parametrize("variant", ["pos_part_gap", "thermoforming_g"])
def test_coupled_fixed_point_agrees_with_newton(variant, rng):
    phi, g = coupled(variant)
    for _ in range(5):
        v = rng.uniform(0, 2, g.size)
        a = phi.solve(v, "fixed_point")
        b = phi.solve(v, "newton")
        np.testing.assert_allclose(a.phi, b.phi, atol=1e-12)
        assert a.residual <= 1e-11 and b.residual <= 1e-11


def test_coupled_state_solves_its_equation(rng):
    phi, g = coupled()
    v = rng.uniform(0, 2, g.size)
    res = phi.solve(v)
    B = phi.B.matrix.toarray()
    gap = phi.L(res.z) - phi.state_grid.embed(np.maximum(v, 0))
    np.testing.assert_allclose(B @ res.z + np.maximum(gap, 0), phi.g, atol=1e-10)
    assert np.all(res.z >= 0)


def test_coupled_uses_positive_part_of_v(rng):
    phi, g = coupled()
    v = rng.normal(size=g.size)
    np.testing.assert_allclose(phi(v), phi(np.maximum(v, 0)), atol=0)


def test_coupled_lower_bound():
    # Phi(v) = k z + nu_offset >= nu_offset because z >= 0
    phi, g = coupled()
    assert np.all(phi(np.zeros(g.size)) >= 0.1)


def test_coupled_spec_validation():
    with pytest.raises(ValueError):
        CoupledObstacleSpec(OperatorSpec(a_react=1.0), nu_offset=0.05, nu=0.1)
    with pytest.raises(ValueError):
        CoupledObstacleSpec(OperatorSpec(a_react=1.0), g_variant="mystery")
    with pytest.raises(ValueError):
        CoupledObstacleSpec(OperatorSpec(a_react=1.0), damping=0.0)


def test_inner_budget_exhaustion():
    phi, g = coupled(inner_max_iter=2)
    with pytest.raises(InnerSolveDiverged):
        phi(np.ones(g.size))


def test_phi_coupled_wrapper_and_factory():
    g = GridSpec(1, (1.0,), 12)
    spec = CoupledObstacleSpec(OperatorSpec(a_react=1.0))
    assert isinstance(make_obstacle(spec, g), CoupledObstacle)
    assert phi_coupled(np.zeros(10), spec, g).phi.shape == (10,)
    with pytest.raises(TypeError):
        make_obstacle(object(), g)


@pytest.mark.parametrize("which", ["impulse", "pos_part_gap", "thermoforming_g"])
def test_increasing_and_scaling(which):
    if which == "impulse":
        g = GridSpec(1, (1.0,), 32)
        phi = make_obstacle(ImpulseObstacleSpec(k=0.2), g)
    else:
        phi, g = coupled(which)
    assert check_increasing(phi, 40, g.size, rng=1).passed
    assert check_scaling(phi, (1.0, 2.0, 5.0), 20, g.size, rng=2).passed


def test_flipped_coupling_fails_increasing():
    phi, g = coupled("flipped_pos_part_gap")
    rep = check_increasing(phi, 30, g.size, rng=3, scale=2.0)
    assert not rep.passed and rep.worst_violation > 1e-6


def test_scaling_check_rejects_lambda_below_one():
    with pytest.raises(ValueError):
        check_scaling(lambda y: y, (0.5,), 1, 3)
