import numpy as np
import pytest

from conftest import coupled_instance, impulse_instance
from qvikit.elliptic import OperatorSpec, assemble, solve_unconstrained
from qvikit.errors import MonotonicityViolated
from qvikit.grid import GridSpec
from qvikit.order_lattice import OrderInterval, leq_with_slack
from qvikit.qvi import (
    QVIInstance,
    iterate_to_fixed_point,
    multistart_fixed_points,
    multistart_map,
    qvi_map,
    solve_extremal,
    verify_solution,
)


def test_instance_forcing_invariants():
    with pytest.raises(ValueError):
        impulse_instance(8, f=-1.0)
    with pytest.raises(ValueError):
        impulse_instance(8, f=2.0, F_cap=np.ones(8))


def test_map_at_zero_is_nonnegative():
    inst = impulse_instance(32)
    assert np.all(qvi_map(inst)(np.zeros(32)) >= 0)


def test_zero_forcing_gives_zero_everything():
    inst = impulse_instance(16, f=0.0)
    assert np.all(qvi_map(inst)(np.zeros(16)) == 0)
    res = solve_extremal(inst)
    assert np.all(res.y_min == 0) and np.all(res.y_max == 0)
    assert [np.all(z == 0) for z in multistart_fixed_points(inst, 5, seed=1)] == [True]
    rep = verify_solution(inst, np.zeros(16))
    assert rep.feasibility_gap == rep.complementarity == rep.fixed_point == 0.0


def test_map_is_order_preserving_on_random_pairs(rng):
    inst = coupled_instance(32)
    T = qvi_map(inst)
    upper = inst.upper_end()
    for _ in range(50):
        v = rng.random(32) * upper
        w = v + rng.random(32) * (upper - v)
        assert leq_with_slack(T(v), T(w), 1e-12)


@pytest.mark.parametrize("make", [impulse_instance, coupled_instance])
def test_extremal_invariants_and_residuals(make):
    inst = make(64)
    res = solve_extremal(inst)
    assert leq_with_slack(res.y_min, res.y_max, 1e-13)
    assert max(res.residuals) <= 1e-10
    assert np.all(res.y_min >= 0) and np.all(res.y_max <= res.interval.upper + 1e-13)
    for y in (res.y_min, res.y_max):
        assert verify_solution(inst, y, 1e-8).passed


def test_outer_traces_are_monotone():
    inst = impulse_instance(64)
    T = qvi_map(inst)
    y = np.zeros(64)
    for _ in range(15):
        ty = T(y)
        assert np.all(ty >= y - 1e-13)
        y = ty
    y = inst.upper_end()
    for _ in range(5):
        ty = T(y)
        assert np.all(ty <= y + 1e-13)
        y = ty


def test_impulse_singleton_regime():
    inst = impulse_instance(64, k=1.0, f=1.0)
    res = solve_extremal(inst)
    assert np.max(np.abs(res.y_max - res.y_min)) <= 1e-8
    assert len(multistart_fixed_points(inst, 8, seed=3)) == 1


def test_verify_flags_infeasible_candidate():
    inst = impulse_instance(32, k=0.1, f=20.0)
    y = inst.upper_end()
    rep = verify_solution(inst, y)
    assert rep.feasibility_gap > 0 and not rep.passed


def test_monotone_dependence_on_forcing(rng):
    for _ in range(3):
        f = rng.uniform(1, 20, 32)
        g = f + rng.uniform(0, 5, 32)
        cap = np.full(32, 30.0)
        a = solve_extremal(impulse_instance(32, f=f, F_cap=cap))
        b = solve_extremal(impulse_instance(32, f=g, F_cap=cap))
        assert leq_with_slack(a.y_min, b.y_min, 1e-10)
        assert leq_with_slack(a.y_max, b.y_max, 1e-10)


def test_translation_obstacle_scales_with_data():
    # Phi(y) = y + k never binds, so the solution is S(f, +inf) and scales with (f, k)
    g = GridSpec(1, (1.0,), 34)
    A = assemble(OperatorSpec(), g)
    f = np.linspace(1, 3, 32)
    sols = []
    for t in (1.0, 2.5):
        inst = QVIInstance(A, lambda y, k=0.5 * t: y + k, t * f, t * f)
        sols.append(solve_extremal(inst).y_min)
    np.testing.assert_allclose(sols[1], 2.5 * sols[0], rtol=1e-9)
    np.testing.assert_allclose(sols[0], solve_unconstrained(A, f), rtol=1e-9)


def toy_T(a, b):
    def T(y):
        v = y[0]
        return np.array([a if v < a else (v if v < b else b)])
    return T


def test_scalar_plateau_map_extremals_and_multistart():
    a, b = 0.25, 0.75
    from qvikit.order_lattice import extremal_fixed_point
    box = OrderInterval(np.zeros(1), np.ones(1))
    assert extremal_fixed_point(toy_T(a, b), box, "from_below", tol=0).solution[0] == a
    assert extremal_fixed_point(toy_T(a, b), box, "from_above", tol=0).solution[0] == b
    pts = multistart_map(toy_T(a, b), box, 40, seed=5, tol=0.0)
    vals = np.array([p[0] for p in pts])
    assert len(vals) > 10 and np.all(vals >= a) and np.all(vals <= b)


def test_non_converging_starts_are_dropped():
    # period-two map from every start except the fixed point 0.5
    T = lambda y: 1.0 - y
    box = OrderInterval(np.zeros(1), np.ones(1))
    assert multistart_map(T, box, 5, seed=0, max_iter=10) == []
    assert iterate_to_fixed_point(T, np.array([0.5])) is not None


def test_non_monotone_obstacle_trips_audit():
    g = GridSpec(1, (1.0,), 18)
    A = assemble(OperatorSpec(), g)
    f = np.full(16, 50.0)
    # decreasing obstacle: larger y gives a lower ceiling
    inst = QVIInstance(A, lambda y: 2.0 - 3.0 * y, f, f)
    with pytest.raises(MonotonicityViolated):
        solve_extremal(inst)
