"""Finite-difference discretization of the elliptic operator

    <A v, w> = sum_ij int a_ij d_j v d_i w + int a_0 v w

with diagonal (axis-aligned) diffusion, plus the optional monotone
nonlinearity u -> A u + max(u, 0).

The discrete operator is assembled from edges: each pair of neighbouring
nodes contributes a_face (u_p - u_q)^2 / h^2 to the energy, with a_face the
mean of the nodal diffusion values. Dirichlet edges to the (eliminated) zero
boundary add to the diagonal; under Neumann boundaries there is simply no
edge beyond the last node. The resulting matrix is a symmetric M-matrix, and
``<A u, v> = h^dim * v . (A_h u)`` is the lumped pairing.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import EllipticityViolated, GridMismatchError, SolverDiverged
from .grid import GridSpec

Nonlinearity = Literal["none", "plus_max"]
Coefficient = Union[float, np.ndarray]


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Coefficients of A, sampled at the nodes of the full grid.

    ``a_diff`` is a scalar, a nodal field of length ``nodes_per_axis**dim``,
    or (2-D only) an array of shape (2, n_nodes) holding a_11 and a_22.
    ``a_react`` is a scalar or a nodal field.
    """

    a_diff: Coefficient = 1.0
    a_react: Coefficient = 0.0
    nonlinearity: Nonlinearity = "none"
    ellipticity_floor: float = 1e-8


def _nodal(coef, grid: GridSpec, name: str) -> np.ndarray:
    n_full = grid.nodes_per_axis**grid.dim
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(n_full, float(arr))
    if arr.shape != (n_full,):
        raise GridMismatchError(f"{name} must be scalar or have {n_full} nodal values")
    return arr.copy()


def _diffusion_fields(spec: OperatorSpec, grid: GridSpec) -> list[np.ndarray]:
    n_full = grid.nodes_per_axis**grid.dim
    arr = np.asarray(spec.a_diff, dtype=float)
    if arr.ndim == 2:
        if arr.shape != (grid.dim, n_full):
            raise GridMismatchError(f"per-axis a_diff must have shape ({grid.dim}, {n_full})")
        return [arr[d].copy() for d in range(grid.dim)]
    a = _nodal(spec.a_diff, grid, "a_diff")
    return [a] * grid.dim


def validate_spec(spec: OperatorSpec, grid: GridSpec) -> None:
    if spec.nonlinearity not in ("none", "plus_max"):
        raise ValueError(f"unknown nonlinearity {spec.nonlinearity!r}")
    if not spec.ellipticity_floor > 0:
        raise EllipticityViolated("ellipticity_floor must be > 0")
    diff = _diffusion_fields(spec, grid)
    react = _nodal(spec.a_react, grid, "a_react")
    for a in diff + [react]:
        if not np.all(np.isfinite(a)):
            raise EllipticityViolated("coefficients must be finite")
    a_min = min(float(a.min()) for a in diff)
    if a_min < spec.ellipticity_floor:
        raise EllipticityViolated(
            f"diffusion minimum {a_min:g} below ellipticity floor {spec.ellipticity_floor:g}")
    r = grid.restrict(react)
    if r.min() < 0:
        raise EllipticityViolated(f"reaction coefficient negative ({r.min():g})")
    if grid.boundary == "neumann" and not r.min() > 0:
        raise EllipticityViolated("Neumann boundary needs a_react > 0 at every node")


def _edge_matrix(diff: list[np.ndarray], grid: GridSpec) -> tuple[sp.csr_matrix, float]:
    """Assemble the diffusion part; also return the minimum face coefficient."""
    n = grid.size
    full_to_unknown = -np.ones(grid.nodes_per_axis**grid.dim, dtype=np.int64)
    full_to_unknown[grid.unknown_index] = np.arange(n)
    idx = np.arange(grid.nodes_per_axis**grid.dim).reshape(grid.full_shape)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    face_min = np.inf
    for d in range(grid.dim):
        h = grid.spacing[d]
        lo = [slice(None)] * grid.dim
        hi = [slice(None)] * grid.dim
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        p = idx[tuple(lo)].ravel()
        q = idx[tuple(hi)].ravel()
        up, uq = full_to_unknown[p], full_to_unknown[q]
        keep = (up >= 0) | (uq >= 0)
        p, q, up, uq = p[keep], q[keep], up[keep], uq[keep]
        w = 0.5 * (diff[d][p] + diff[d][q]) / h**2
        face_min = min(face_min, float((w * h**2).min()))
        np.add.at(diag, up[up >= 0], w[up >= 0])
        np.add.at(diag, uq[uq >= 0], w[uq >= 0])
        both = (up >= 0) & (uq >= 0)
        rows += [up[both], uq[both]]
        cols += [uq[both], up[both]]
        vals += [-w[both], -w[both]]
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return mat, face_min


def _poincare_constant(grid: GridSpec) -> float:
    """Smallest eigenvalue of the unit-coefficient grid Laplacian (0 for Neumann)."""
    if grid.boundary == "neumann":
        return 0.0
    return float(sum(
        4.0 / h**2 * np.sin(np.pi * h / (2.0 * L)) ** 2
        for h, L in zip(grid.spacing, grid.extent)))


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Assembled operator A_h on the unknowns of ``grid``."""

    matrix: sp.csr_matrix
    grid: GridSpec
    nonlinearity: Nonlinearity = "none"
    strong_monotonicity: float = 0.0
    face_min: float = 0.0
    react_min: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_linear(self) -> bool:
        return self.nonlinearity == "none"

    @cached_property
    def diag(self) -> np.ndarray:
        return self.matrix.diagonal().copy()

    @cached_property
    def lipschitz_l2(self) -> float:
        """Upper bound for ||A(u) - A(v)||_2 / ||u - v||_2 from the stencil."""
        row_sum = float(np.abs(self.matrix).sum(axis=1).max())
        return row_sum + (1.0 if self.nonlinearity == "plus_max" else 0.0)

    def factorized(self):
        if "lu" not in self._cache:
            self._cache["lu"] = spla.splu(self.matrix.tocsc())
        return self._cache["lu"]


def assemble(spec: OperatorSpec, grid: GridSpec) -> SparseOperator:
    """Assemble A_h for ``spec`` on ``grid``; raises EllipticityViolated."""
    validate_spec(spec, grid)
    diff = _diffusion_fields(spec, grid)
    mat, face_min = _edge_matrix(diff, grid)
    react = grid.restrict(_nodal(spec.a_react, grid, "a_react"))
    mat = (mat + sp.diags(react)).tocsr()
    mat.sort_indices()
    lam1 = _poincare_constant(grid)
    r = float(react.min())
    c = min(face_min, (face_min * lam1 + r) / (1.0 + lam1))
    return SparseOperator(mat, grid, spec.nonlinearity, c, face_min, r)


def laplacian(grid: GridSpec) -> sp.csr_matrix:
    """Unit-coefficient diffusion matrix (no reaction) on ``grid``."""
    mat, _ = _edge_matrix([np.ones(grid.nodes_per_axis**grid.dim)] * grid.dim, grid)
    return mat


def apply(A: SparseOperator, y: np.ndarray) -> np.ndarray:
    """A(y) as a DualVector: A_h y, plus max(y, 0) for ``plus_max``."""
    y = np.asarray(y, dtype=float)
    if y.shape != (A.n,):
        raise GridMismatchError(f"expected {A.n} values, got shape {y.shape}")
    out = A.matrix @ y
    if A.nonlinearity == "plus_max":
        out = out + np.maximum(y, 0.0)
    return out


def v_norm(u: np.ndarray, grid: GridSpec, lap: sp.csr_matrix | None = None) -> float:
    """Discrete H^1-type norm: h^dim (|grad u|^2 + |u|^2), square-rooted.

    For Dirichlet grids the gradient includes the edges to the zero boundary.
    """
    lap = laplacian(grid) if lap is None else lap
    return float(np.sqrt(grid.cell_volume * (u @ (lap @ u) + u @ u)))


def dual_norm(r: np.ndarray, grid: GridSpec, lap: sp.csr_matrix | None = None) -> float:
    """Norm of a DualVector against :func:`v_norm`: sqrt(h^dim r'(L + I)^{-1} r)."""
    lap = laplacian(grid) if lap is None else lap
    gram = (lap + sp.identity(grid.size)).tocsc()
    return float(np.sqrt(grid.cell_volume * r @ spla.spsolve(gram, r)))


def solve_unconstrained(
    A: SparseOperator, f: np.ndarray, tol: float = 1e-12, max_sweeps: int = 2_000_000,
) -> np.ndarray:
    """S(f, +inf): solve A(y) = f.

    Linear operators use a cached sparse LU factorization. For ``plus_max``
    the solve is nonlinear Gauss-Seidel with exact pointwise scalar solves.
    Either way ||A(y) - f||_inf <= tol * (1 + ||f||_inf) on return.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (A.n,):
        raise GridMismatchError(f"expected {A.n} forcing values, got shape {f.shape}")
    bound = tol * (1.0 + float(np.max(np.abs(f), initial=0.0)))
    if A.is_linear:
        y = A.factorized().solve(f)
        res = float(np.max(np.abs(A.matrix @ y - f), initial=0.0))
        if res > bound:
            # one step of iterative refinement
            y = y + A.factorized().solve(f - A.matrix @ y)
            res = float(np.max(np.abs(A.matrix @ y - f), initial=0.0))
    else:
        y = np.zeros(A.n)
        m = A.matrix
        sweeps, res = _kernels.projected_sor(
            m.indptr, m.indices, m.data, A.diag, True, f, np.full(A.n, np.inf), y,
            1.0, bound, max_sweeps)
    if not np.all(np.isfinite(y)) or res > bound:
        raise SolverDiverged(f"unconstrained solve residual {res:.3e} exceeds {bound:.3e}")
    return y
