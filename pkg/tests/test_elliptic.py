import numpy as np
import pytest
import scipy.optimize

from oracles import dense_dirichlet_1d
from qvikit.elliptic import (
    OperatorSpec,
    apply,
    assemble,
    dual_norm,
    laplacian,
    solve_unconstrained,
    v_norm,
)
from qvikit.errors import EllipticityViolated, GridMismatchError
from qvikit.grid import GridSpec, pairing


def test_constant_coefficient_stencil():
    g = GridSpec(1, (1.0,), 9)
    A = assemble(OperatorSpec(), g).matrix.toarray() * g.spacing[0] ** 2
    ref = 2 * np.eye(7) - np.eye(7, k=1) - np.eye(7, k=-1)
    np.testing.assert_allclose(A, ref, atol=1e-13)


def test_variable_coefficient_matches_row_by_row_assembly(rng):
    g = GridSpec(1, (2.0,), 12)
    a = 0.5 + rng.random(12)
    r = rng.random(12)
    A = assemble(OperatorSpec(a, r), g).matrix.toarray()
    np.testing.assert_allclose(A, dense_dirichlet_1d(a, g.spacing[0], r), rtol=1e-14)


def test_matrix_is_symmetric_m_matrix(rng):
    g = GridSpec(2, (1.0, 1.5), 9, "neumann")
    spec = OperatorSpec(0.2 + rng.random(81), 0.1 + rng.random(81))
    A = assemble(spec, g).matrix.toarray()
    np.testing.assert_allclose(A, A.T, atol=0)
    off = A - np.diag(np.diag(A))
    assert np.all(off <= 0)
    assert np.all(np.diag(A) > 0)
    assert np.all(np.linalg.inv(A) >= -1e-12)


def test_neumann_rows_sum_to_reaction():
    g = GridSpec(1, (1.0,), 10, "neumann")
    A = assemble(OperatorSpec(3.0, 0.7), g).matrix
    np.testing.assert_allclose(A @ np.ones(10), 0.7, atol=1e-10)


@pytest.mark.parametrize("dim,boundary", [(1, "dirichlet_zero"), (2, "dirichlet_zero"),
                                          (2, "neumann")])
def test_poincare_constant_against_eigensolver(dim, boundary):
    g = GridSpec(dim, (1.0, 2.0)[:dim], 9, boundary)
    lam = np.linalg.eigvalsh(laplacian(g).toarray())[0]
    A = assemble(OperatorSpec(1.0, 0.0 if boundary != "neumann" else 1.0), g)
    if boundary == "neumann":
        assert lam == pytest.approx(0.0, abs=1e-10)
        assert A.strong_monotonicity == pytest.approx(min(1.0, 1.0))
    else:
        # c = min(1, lam1 / (1 + lam1))
        assert A.strong_monotonicity == pytest.approx(lam / (1 + lam), rel=1e-12)


def test_anisotropic_diffusion_per_axis():
    g = GridSpec(2, (1.0,), 5)
    n_full = 25
    A = assemble(OperatorSpec(np.stack([np.full(n_full, 1.0), np.full(n_full, 4.0)])), g)
    h2 = g.spacing[0] ** 2
    # centre unknown: x-neighbours weight 1/h^2, y-neighbours 4/h^2
    row = A.matrix.toarray()[4]
    assert row[4] == pytest.approx(10 / h2)
    assert sorted(np.round(row[row < 0] * h2, 12)) == [-4.0, -4.0, -1.0, -1.0]


@pytest.mark.parametrize("spec,grid", [
    (OperatorSpec(a_diff=1e-10), GridSpec(1, (1.0,), 6)),
    (OperatorSpec(a_react=-1.0), GridSpec(1, (1.0,), 6)),
    (OperatorSpec(a_react=0.0), GridSpec(1, (1.0,), 6, "neumann")),
    (OperatorSpec(a_diff=np.array([1.0, 1.0, np.inf, 1, 1, 1])), GridSpec(1, (1.0,), 6)),
])
def test_ellipticity_violations(spec, grid):
    with pytest.raises(EllipticityViolated):
        assemble(spec, grid)


def test_coefficient_field_shape_checked():
    with pytest.raises(GridMismatchError):
        assemble(OperatorSpec(np.ones(3)), GridSpec(1, (1.0,), 6))


def test_unconstrained_linear_solve(rng):
    g = GridSpec(2, (1.0,), 12)
    A = assemble(OperatorSpec(1 + rng.random(144), rng.random(144)), g)
    f = rng.random(g.size)
    y = solve_unconstrained(A, f)
    np.testing.assert_allclose(y, np.linalg.solve(A.matrix.toarray(), f), rtol=1e-10)


def test_unconstrained_plus_max_against_root_finder(rng):
    g = GridSpec(1, (1.0,), 22)
    A = assemble(OperatorSpec(nonlinearity="plus_max"), g)
    f = rng.normal(size=g.size) * 30
    y = solve_unconstrained(A, f, tol=1e-12)
    M = A.matrix.toarray()
    ref = scipy.optimize.root(lambda u: M @ u + np.maximum(u, 0) - f, np.zeros(g.size),
                              method="hybr", tol=1e-14).x
    np.testing.assert_allclose(y, ref, atol=1e-9)
    assert np.max(np.abs(apply(A, y) - f)) <= 1e-12 * (1 + np.abs(f).max())


def test_norms_are_dual(rng):
    g = GridSpec(1, (1.0,), 30)
    lap = laplacian(g)
    for _ in range(20):
        r, u = rng.normal(size=28), rng.normal(size=28)
        assert abs(pairing(r, u, g)) <= dual_norm(r, g, lap) * v_norm(u, g, lap) * (1 + 1e-12)


def test_dual_norm_attained_by_riesz_representer(rng):
    g = GridSpec(1, (1.0,), 30)
    lap = laplacian(g)
    r = rng.normal(size=28)
    u = np.linalg.solve(lap.toarray() + np.eye(28), r)
    assert pairing(r, u, g) == pytest.approx(dual_norm(r, g, lap) * v_norm(u, g, lap), rel=1e-10)


def _operator_axioms(A, g, rng, pairs):
    lap = laplacian(g)
    worst = {"homogeneity": 0.0, "t_monotone": 0.0, "strong": 0.0}
    for _ in range(pairs):
        u, v = rng.normal(size=(2, g.size)) * rng.choice([1e-3, 1.0, 1e3])
        t = rng.uniform(0.01, 100)
        Au, Av = apply(A, u), apply(A, v)
        scale = np.abs(Au).max() * t + 1e-300
        worst["homogeneity"] = max(worst["homogeneity"],
                                   np.abs(apply(A, t * u) - t * Au).max() / scale)
        d = u - v
        size = np.abs(Au - Av).max() * np.abs(d).max() * g.size * g.cell_volume + 1e-300
        worst["t_monotone"] = max(worst["t_monotone"],
                                  -pairing(Au - Av, np.maximum(d, 0), g) / size)
        lhs = pairing(Au - Av, d, g)
        rhs = A.strong_monotonicity * v_norm(d, g, lap) ** 2
        worst["strong"] = max(worst["strong"], (rhs - lhs) / lhs)
    return worst


@pytest.mark.parametrize("nonlinearity", ["none", "plus_max"])
def test_operator_axioms_on_random_pairs(rng, nonlinearity):
    g = GridSpec(1, (1.0,), 34)
    A = assemble(OperatorSpec(0.3 + rng.random(34), rng.random(34), nonlinearity), g)
    worst = _operator_axioms(A, g, rng, 200)
    assert all(w <= 1e-12 for w in worst.values()), worst


def test_strong_monotonicity_constant_is_sharp_for_laplacian():
    # c = lam1/(1+lam1) is attained by the first eigenvector
    g = GridSpec(1, (1.0,), 20)
    A = assemble(OperatorSpec(), g)
    w, V = np.linalg.eigh(laplacian(g).toarray())
    u = V[:, 0]
    ratio = pairing(apply(A, u), u, g) / v_norm(u, g) ** 2
    assert ratio == pytest.approx(A.strong_monotonicity, rel=1e-10)
