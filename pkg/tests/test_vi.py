import numpy as np
import pytest

from oracles import lcp_primal_dual
from qvikit.elliptic import OperatorSpec, assemble, solve_unconstrained
from qvikit.errors import GridMismatchError, MaxSweepsExceeded, NoValidActiveSet
from qvikit.grid import GridSpec
from qvikit.vi import (
    UNCONSTRAINED,
    VISolveParams,
    accepted_active_sets,
    active_set_oracle,
    check_comparison,
    complementarity_residual,
    energy,
    pgs_sweep,
    solve_vi,
)


def small(n=10, seed=0, react=0.0):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, (1.0,), n + 2)
    return assemble(OperatorSpec(0.5 + rng.random(n + 2), react), g), rng


def test_pgs_matches_both_oracles():
    for seed in range(15):
        A, rng = small(10, seed)
        f = rng.uniform(0, 30, 10)
        psi = rng.uniform(0.02, 0.4, 10)
        y = solve_vi(A, f, psi).solution
        np.testing.assert_allclose(y, active_set_oracle(A, f, psi), atol=1e-10)
        np.testing.assert_allclose(y, lcp_primal_dual(A.matrix.toarray(), f, psi), atol=1e-10)


def test_oracle_method_through_params():
    A, rng = small(8, 3)
    f, psi = rng.uniform(0, 30, 8), rng.uniform(0.02, 0.4, 8)
    rep = solve_vi(A, f, psi, VISolveParams(method="active_set_oracle"))
    assert rep.complementarity_residual <= 1e-11


def test_complementarity_conditions_hold():
    A, rng = small(12, 4)
    f, psi = rng.uniform(0, 30, 12), rng.uniform(0.02, 0.4, 12)
    rep = solve_vi(A, f, psi)
    y, M = rep.solution, A.matrix.toarray()
    slack = f - M @ y
    assert np.all(y <= psi)
    assert np.all(slack >= -1e-9)
    assert np.max(np.abs(slack * (psi - y))) <= 1e-9
    assert rep.complementarity_residual == complementarity_residual(A, f, psi, y)


def test_unconstrained_obstacle_gives_pde_solution():
    A, rng = small(10, 5)
    f = rng.uniform(-5, 5, 10)
    y = solve_vi(A, f, UNCONSTRAINED).solution
    np.testing.assert_allclose(y, solve_unconstrained(A, f), atol=1e-10)


def test_inactive_obstacle_is_invisible():
    A, rng = small(10, 6)
    f = rng.uniform(0, 1, 10)
    u = solve_unconstrained(A, f)
    y = solve_vi(A, f, u + 1.0).solution
    np.testing.assert_allclose(y, u, atol=1e-10)


def test_solution_minimizes_energy_over_feasible_points():
    A, rng = small(10, 7)
    f, psi = rng.uniform(0, 30, 10), rng.uniform(0.02, 0.4, 10)
    y = solve_vi(A, f, psi).solution
    e0 = energy(A, f, y)
    for _ in range(200):
        v = np.minimum(y + rng.normal(scale=0.05, size=10), psi)
        assert energy(A, f, v) >= e0 - 1e-12


def test_comparison_principle_randomized():
    A, rng = small(32, 8)
    for _ in range(30):
        f1 = rng.uniform(0, 20, 32)
        f2 = f1 + rng.uniform(0, 5, 32) * (rng.random(32) < 0.5)
        psi1 = rng.uniform(0.01, 0.3, 32)
        psi2 = psi1 + rng.uniform(0, 0.2, 32) * (rng.random(32) < 0.5)
        assert check_comparison(A, f1, f2, psi1, psi2).gap <= 1e-10


def test_comparison_requires_ordered_data():
    A, _ = small(4)
    with pytest.raises(ValueError):
        check_comparison(A, np.ones(4), np.zeros(4), np.ones(4), np.ones(4))


def test_sweeps_from_zero_are_nondecreasing():
    A, rng = small(16, 9)
    f, psi = rng.uniform(0, 30, 16), rng.uniform(0.02, 0.4, 16)
    y = np.zeros(16)
    for _ in range(40):
        y_new = pgs_sweep(A, f, psi, y)
        assert np.all(y_new >= y - 1e-15)
        y = y_new


def test_sweeps_from_above_are_nonincreasing():
    A, rng = small(16, 10)
    f, psi = rng.uniform(0, 30, 16), rng.uniform(0.02, 0.4, 16)
    y = psi.copy()
    for _ in range(40):
        y_new = pgs_sweep(A, f, psi, y)
        assert np.all(y_new <= y + 1e-15)
        y = y_new


@pytest.mark.parametrize("omega", [0.7, 1.5])
def test_relaxation_reaches_same_solution(omega):
    A, rng = small(12, 11)
    f, psi = rng.uniform(0, 30, 12), rng.uniform(0.02, 0.4, 12)
    y = solve_vi(A, f, psi, VISolveParams(relaxation=omega)).solution
    np.testing.assert_allclose(y, active_set_oracle(A, f, psi), atol=1e-10)


def test_nonlinear_operator_vi_satisfies_complementarity():
    g = GridSpec(1, (1.0,), 30)
    A = assemble(OperatorSpec(nonlinearity="plus_max"), g)
    rng = np.random.default_rng(12)
    f, psi = rng.uniform(-10, 30, 28), rng.uniform(0.02, 0.4, 28)
    rep = solve_vi(A, f, psi)
    assert rep.complementarity_residual <= 1e-10 * (1 + 30)


def test_sweep_budget_exhaustion():
    A, rng = small(30, 13)
    with pytest.raises(MaxSweepsExceeded):
        solve_vi(A, rng.uniform(0, 30, 30), np.full(30, 5.0), VISolveParams(max_sweeps=2))


def test_shape_and_value_errors():
    A, _ = small(5)
    with pytest.raises(GridMismatchError):
        solve_vi(A, np.ones(4), np.ones(5))
    with pytest.raises(ValueError):
        solve_vi(A, np.ones(5), np.full(5, -np.inf))
    with pytest.raises(ValueError):
        VISolveParams(relaxation=2.0)


def test_degenerate_contact_still_unique():
    # psi equal to the unconstrained solution: contact with zero multiplier
    A, rng = small(6, 14)
    f = rng.uniform(0, 5, 6)
    u = solve_unconstrained(A, f)
    hits = list(accepted_active_sets(A, f, u))
    assert len(hits) > 1
    np.testing.assert_allclose(active_set_oracle(A, f, u), u, atol=1e-12)


def test_oracle_rejects_nonlinear_and_large_problems():
    g = GridSpec(1, (1.0,), 20)
    with pytest.raises(ValueError):
        active_set_oracle(assemble(OperatorSpec(), g), np.ones(18), np.ones(18))
    g = GridSpec(1, (1.0,), 6)
    with pytest.raises(ValueError):
        active_set_oracle(assemble(OperatorSpec(nonlinearity="plus_max"), g), np.ones(4), np.ones(4))


def test_no_valid_active_set_on_indefinite_matrix():
    # a non-M-matrix can leave the KKT system without solutions
    import scipy.sparse as sp
    from qvikit.elliptic import SparseOperator
    g = GridSpec(1, (1.0,), 4)
    M = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, -1.0]]))
    A = SparseOperator(M, g)
    with pytest.raises(NoValidActiveSet):
        active_set_oracle(A, np.array([1.0, 1.0]), np.array([0.0, -5.0]))
