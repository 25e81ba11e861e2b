"""The upper-obstacle variational inequality S(f, psi).

Find y <= psi with <A(y) - f, v - y> >= 0 for every v <= psi. On the grid
this is the complementarity system

    A(y) - f <= 0,   y <= psi,   (A(y) - f)_i (y_i - psi_i) = 0,

equivalently min(f - A(y), psi - y) = 0 componentwise. Note the sign: the
obstacle bounds the state from above. psi_i = +inf (``np.inf``) marks an
unconstrained node; no large finite stand-in is ever used.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels
from .elliptic import SparseOperator, apply
from .errors import (
    GridMismatchError,
    MaxSweepsExceeded,
    NonConvergence,
    NoValidActiveSet,
)

UNCONSTRAINED = np.inf


@dataclass(frozen=True)
class VISolveParams:
    method: Literal["projected_gauss_seidel", "active_set_oracle"] = "projected_gauss_seidel"
    tol: float = 1e-11
    max_sweeps: int = 1_000_000
    relaxation: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not 0.0 < self.relaxation < 2.0:
            raise ValueError("relaxation must lie in (0, 2)")
        if self.method not in ("projected_gauss_seidel", "active_set_oracle"):
            raise ValueError(f"unknown VI method {self.method!r}")


@dataclass
class VIReport:
    solution: np.ndarray
    sweeps: int
    complementarity_residual: float
    active_set: np.ndarray


def _check_shapes(A: SparseOperator, *arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.ndim == 0:
            a = np.full(A.n, float(a))
        if a.shape != (A.n,):
            raise GridMismatchError(f"expected {A.n} values, got shape {a.shape}")
        out.append(a)
    return out


def complementarity_residual(A: SparseOperator, f, psi, y) -> float:
    """||min(f - A(y), psi - y)||_inf."""
    f, psi, y = _check_shapes(A, f, psi, y)
    m = A.matrix
    return float(_kernels.complementarity_residual(
        m.indptr, m.indices, m.data, not A.is_linear, f, psi, y))


def pgs_sweep(A: SparseOperator, f, psi, y: np.ndarray, relaxation: float = 1.0) -> np.ndarray:
    """One projected Gauss-Seidel/SOR sweep from ``y``; returns a new array."""
    f, psi, y = _check_shapes(A, f, psi, y)
    y = np.minimum(y, psi)
    m = A.matrix
    _kernels.projected_sor(m.indptr, m.indices, m.data, A.diag, not A.is_linear,
                           f, psi, y, relaxation, -1.0, 1)
    return y


def solve_vi(
    A: SparseOperator,
    f,
    psi,
    params: VISolveParams | None = None,
    y0: np.ndarray | None = None,
) -> VIReport:
    """Compute S(f, psi).

    Projected Gauss-Seidel (SOR when ``relaxation != 1``) started from
    min(y0, psi), y0 defaulting to 0. Stops once the complementarity residual
    is at most ``tol``, or at most the rounding level of evaluating f - A(y)
    when that is larger. With ``relaxation == 1`` and an M-matrix,
    a start that is a sub-solution (A y0 <= f, y0 <= psi) gives nondecreasing
    sweeps, and a start above the solution gives nonincreasing sweeps.
    """
    params = params or VISolveParams()
    f, psi = _check_shapes(A, f, psi)
    if np.any(np.isnan(psi)) or np.any(psi == -np.inf):
        raise ValueError("obstacle must be finite or +inf")
    if params.method == "active_set_oracle":
        y = active_set_oracle(A, f, psi)
        return VIReport(y, 0, complementarity_residual(A, f, psi, y), y == psi)

    y = np.zeros(A.n) if y0 is None else np.array(y0, dtype=float).ravel()
    if y.shape != (A.n,):
        raise GridMismatchError(f"warm start has shape {y.shape}, expected ({A.n},)")
    np.minimum(y, psi, out=y)
    m = A.matrix
    total, budget = 0, params.max_sweeps
    while True:
        bound = max(params.tol, _rounding_floor(A, f, y))
        sweeps, res = _kernels.projected_sor(
            m.indptr, m.indices, m.data, A.diag, not A.is_linear, f, psi, y,
            params.relaxation, bound, budget - total)
        if not np.all(np.isfinite(y)):
            raise NonConvergence("projected Gauss-Seidel produced non-finite values")
        if sweeps > budget - total:
            raise MaxSweepsExceeded(
                f"residual {res:.3e} above {bound:.3e} after {params.max_sweeps} sweeps")
        total += sweeps
        # the floor grows with |y|; stop once the bound is stable
        if res <= max(params.tol, _rounding_floor(A, f, y)) or sweeps == 0:
            return VIReport(y, total, float(res), y == psi)


def _rounding_floor(A: SparseOperator, f, y) -> float:
    """Rounding level of evaluating f - A(y) in floating point."""
    size = abs(A.matrix) @ np.abs(y) + np.abs(f)
    if not A.is_linear:
        size += np.abs(y)
    return 16.0 * np.finfo(float).eps * float(np.max(size, initial=0.0))


def accepted_active_sets(A: SparseOperator, f, psi, slack: float = 1e-12):
    """Enumerate every contact set E whose candidate passes the KKT test.

    For each E the candidate solves A y = f off E with y = psi on E; it is
    accepted iff y <= psi + slack everywhere and A y - f <= slack on E.
    Yields (mask, y) pairs. Linear operators only; cost 2^n dense solves.
    """
    if not A.is_linear:
        raise ValueError("active-set enumeration needs a linear operator")
    f, psi = _check_shapes(A, f, psi)
    n = A.n
    if n > 14:
        raise ValueError(f"enumeration limited to n <= 14, got {n}")
    M = A.matrix.toarray()
    finite = np.isfinite(psi)
    for bits in itertools.product((False, True), repeat=n):
        E = np.array(bits, dtype=bool)
        if np.any(E & ~finite):
            continue
        free = ~E
        y = np.where(E, psi, 0.0)
        if free.any():
            rhs = f[free] - M[np.ix_(free, E)] @ psi[E]
            y[free] = np.linalg.solve(M[np.ix_(free, free)], rhs)
        if np.any(y > psi + slack):
            continue
        if np.any((M @ y - f)[E] > slack):
            continue
        yield E, y


def active_set_oracle(A: SparseOperator, f, psi) -> np.ndarray:
    """Exact discrete VI solution by exhaustive active-set enumeration."""
    hits = list(accepted_active_sets(A, f, psi))
    if not hits:
        raise NoValidActiveSet("no contact set satisfies the KKT conditions")
    y = hits[0][1]
    for _, other in hits[1:]:
        # degenerate contact (y_i = psi_i with zero multiplier) may admit two
        # sets, but they must describe the same point
        if np.max(np.abs(other - y)) > 1e-9:
            raise NoValidActiveSet("several distinct KKT points accepted")
    return y


@dataclass
class ComparisonReport:
    gap: float
    y1: np.ndarray
    y2: np.ndarray


def check_comparison(A: SparseOperator, f1, f2, psi1, psi2,
                     params: VISolveParams | None = None) -> ComparisonReport:
    """Solve both VIs and measure max_i (y1 - y2)_i^+ for ordered data."""
    f1, f2, psi1, psi2 = _check_shapes(A, f1, f2, psi1, psi2)
    if np.any(f1 > f2) or np.any(psi1 > psi2):
        raise ValueError("comparison needs f1 <= f2 and psi1 <= psi2")
    y1 = solve_vi(A, f1, psi1, params).solution
    y2 = solve_vi(A, f2, psi2, params).solution
    gap = float(np.max(np.maximum(y1 - y2, 0.0), initial=0.0))
    return ComparisonReport(gap, y1, y2)


def energy(A: SparseOperator, f, y) -> float:
    """Quadratic energy 0.5 y'A_h y - f'y (linear symmetric A only)."""
    return float(0.5 * y @ (A.matrix @ y) - f @ y)


def vi_residual_vector(A: SparseOperator, f, psi, y) -> np.ndarray:
    return np.minimum(np.asarray(f) - apply(A, y), np.asarray(psi) - y)
