"""Obstacle maps Phi for the QVI constraint y <= Phi(y).

Two families are provided:

* the impulse-control map  Phi(y)(x) = k + min over shifts xi >= 0 of
  (c0(xi) + y(x + xi)), evaluated directly over grid nodes;
* the coupled map Phi(v) = L z(v), where z(v) solves the nonlinear
  elliptic problem  B z + G(L z, v) = g  with L z = k z + nu.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Literal, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import OperatorSpec, assemble
from .errors import GridMismatchError, InnerSolveDiverged, NegativityDetected
from .grid import GridSpec
from .order_lattice import pos_part

log = logging.getLogger(__name__)

ObstacleMap = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------- impulse

@dataclass(frozen=True)
class ImpulseObstacleSpec:
    """Fixed cost k > 0 and proportional cost c0(xi) = alpha * |xi|^gamma."""

    k: float = 1.0
    c0_alpha: float = 1.0
    c0_gamma: float = 0.5

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("impulse cost k must be > 0")
        if self.c0_alpha < 0:
            raise ValueError("c0 scale alpha must be >= 0")
        if not 0 < self.c0_gamma <= 1:
            raise ValueError("c0 exponent gamma must lie in (0, 1]")

    def c0(self, xi: np.ndarray) -> np.ndarray:
        return self.c0_alpha * np.asarray(xi, dtype=float) ** self.c0_gamma


class ImpulseObstacle:
    """Phi(y)_i = k + min_{j : x_j >= x_i} (c0(|x_j - x_i|) + y_j).

    The minimum runs over every node of the closed domain, so on a Dirichlet
    grid the (zero) boundary values take part. The n_nodes x n_nodes shift
    cost table is built once.
    """

    def __init__(self, spec: ImpulseObstacleSpec, grid: GridSpec):
        self.spec = spec
        self.grid = grid
        x = grid.full_coordinates
        if x.shape[0] > 10_000:
            raise ValueError("direct O(n^2) evaluation limited to 10000 nodes")
        shift = x[None, :, :] - x[:, None, :]
        reachable = np.all(shift >= -1e-12 * max(grid.extent), axis=2)
        dist = np.linalg.norm(np.where(reachable[..., None], shift, 0.0), axis=2)
        cost = np.where(reachable, spec.c0(dist), np.inf)
        self.cost = cost[grid.unknown_index]

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.grid.size,):
            raise GridMismatchError(f"expected {self.grid.size} values, got {y.shape}")
        full = self.grid.embed(y)
        return self.spec.k + np.min(self.cost + full[None, :], axis=1)


@lru_cache(maxsize=32)
def _impulse(spec: ImpulseObstacleSpec, grid: GridSpec) -> ImpulseObstacle:
    return ImpulseObstacle(spec, grid)


def phi_impulse(y, spec: ImpulseObstacleSpec, grid: GridSpec) -> np.ndarray:
    return _impulse(spec, grid)(y)


# ---------------------------------------------------------------- coupled

GVariant = Literal["pos_part_gap", "thermoforming_g", "flipped_pos_part_gap"]
Field = Union[float, np.ndarray]


def thermoforming_g(x: np.ndarray) -> np.ndarray:
    """-1 for x <= 0, x - 1 for 0 < x <= 1, 0 for x > 1."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.0, -1.0, np.where(x <= 1.0, x - 1.0, 0.0))


def _g_value(variant: str, gap: np.ndarray) -> np.ndarray:
    if variant == "pos_part_gap":
        return np.maximum(gap, 0.0)
    if variant == "thermoforming_g":
        return thermoforming_g(gap)
    if variant == "flipped_pos_part_gap":
        return -np.maximum(gap, 0.0)
    raise ValueError(f"unknown G variant {variant!r}")


def _g_slope(variant: str, gap: np.ndarray) -> np.ndarray:
    if variant == "pos_part_gap":
        return (gap > 0.0).astype(float)
    if variant == "thermoforming_g":
        return ((gap > 0.0) & (gap <= 1.0)).astype(float)
    if variant == "flipped_pos_part_gap":
        return -(gap > 0.0).astype(float)
    raise ValueError(f"unknown G variant {variant!r}")


@dataclass(frozen=True, eq=False)
class CoupledObstacleSpec:
    """Data of  B z + G(L z, v) = g,  Phi = L z = k_field z + nu_offset.

    Fields (``k_field``, ``nu_offset``, ``g_rhs``) are scalars or nodal arrays
    over the full grid; B is assembled with Neumann boundary conditions.
    """

    b_spec: OperatorSpec
    g_variant: GVariant = "pos_part_gap"
    k_field: Field = 0.5
    nu_offset: Field = 0.1
    nu: float = 0.1
    g_rhs: Field = 1.0
    inner_tol: float = 1e-14
    inner_max_iter: int = 2000
    damping: float = 0.5
    inner_solver: Literal["fixed_point", "newton"] = "fixed_point"

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be > 0")
        if np.min(self.nu_offset) < self.nu:
            raise ValueError("L(0) = nu_offset must be >= nu > 0")
        if np.min(self.k_field) < 0:
            raise ValueError("k_field must be >= 0")
        if np.min(self.g_rhs) < 0:
            raise ValueError("g_rhs must be >= 0")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.inner_solver not in ("fixed_point", "newton"):
            raise ValueError(f"unknown inner solver {self.inner_solver!r}")
        _g_value(self.g_variant, np.zeros(1))


@dataclass
class CoupledObstacleResult:
    phi: np.ndarray
    z: np.ndarray
    iterations: int
    residual: float


class CoupledObstacle:
    """Phi(v) = L z(v) for v on the unknowns of ``state_grid``.

    z lives on every node of the same geometry (Neumann space W); v is taken
    as v^+ and extended by zero to the Dirichlet boundary when the state grid
    eliminates it.
    """

    def __init__(self, spec: CoupledObstacleSpec, state_grid: GridSpec):
        self.spec = spec
        self.state_grid = state_grid
        self.w_grid = state_grid.with_boundary("neumann")
        self.B = assemble(spec.b_spec, self.w_grid)
        n = self.w_grid.size
        self.k = np.broadcast_to(np.asarray(spec.k_field, dtype=float), (n,)).copy()
        self.nu_off = np.broadcast_to(np.asarray(spec.nu_offset, dtype=float), (n,)).copy()
        self.g = np.broadcast_to(np.asarray(spec.g_rhs, dtype=float), (n,)).copy()
        self._lu = self.B.factorized()

    def L(self, z: np.ndarray) -> np.ndarray:
        return self.k * z + self.nu_off

    def _residual(self, z, v_full) -> np.ndarray:
        return self.B.matrix @ z + _g_value(self.spec.g_variant, self.L(z) - v_full) - self.g

    def _fixed_point(self, v_full: np.ndarray, z: np.ndarray):
        theta = self.spec.damping
        for it in range(1, self.spec.inner_max_iter + 1):
            target = self._lu.solve(self.g - _g_value(self.spec.g_variant, self.L(z) - v_full))
            z_new = (1.0 - theta) * z + theta * target
            step = float(np.max(np.abs(z_new - z)))
            z = z_new
            if not np.all(np.isfinite(z)):
                break
            if step <= self.spec.inner_tol * (1.0 + float(np.max(np.abs(z)))):
                return z, it
        raise InnerSolveDiverged(
            f"damped fixed point did not converge in {self.spec.inner_max_iter} iterations")

    def _newton(self, v_full: np.ndarray, z: np.ndarray):
        # once the slope pattern is stable the step is an exact linear solve,
        # so a tiny step certifies convergence (the residual itself carries
        # rounding of order |B| |z| eps)
        for it in range(1, self.spec.inner_max_iter + 1):
            gap = self.L(z) - v_full
            F = self._residual(z, v_full)
            J = (self.B.matrix + sp.diags(_g_slope(self.spec.g_variant, gap) * self.k)).tocsc()
            z_new = z - spla.spsolve(J, F)
            if not np.all(np.isfinite(z_new)):
                break
            same_pattern = np.array_equal(
                _g_slope(self.spec.g_variant, self.L(z_new) - v_full),
                _g_slope(self.spec.g_variant, gap))
            step = float(np.max(np.abs(z_new - z)))
            z = z_new
            if same_pattern and step <= 1e3 * self.spec.inner_tol * (1.0 + float(np.max(np.abs(z)))):
                return z, it
        raise InnerSolveDiverged(
            f"semismooth Newton did not converge in {self.spec.inner_max_iter} iterations")

    def solve(self, v, solver: str | None = None) -> CoupledObstacleResult:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.state_grid.size,):
            raise GridMismatchError(f"expected {self.state_grid.size} values, got {v.shape}")
        v_full = self.state_grid.embed(pos_part(v))
        z0 = self._lu.solve(self.g)
        solver = solver or self.spec.inner_solver
        if solver == "newton":
            z, it = self._newton(v_full, z0)
        else:
            z, it = self._fixed_point(v_full, z0)
        if np.min(z) < -1e-12:
            raise NegativityDetected(f"z(v) has negative entry {np.min(z):.3e}")
        phi_full = self.L(z)
        res = float(np.max(np.abs(self._residual(z, v_full))))
        return CoupledObstacleResult(self.state_grid.restrict(phi_full), z, it, res)

    def __call__(self, v) -> np.ndarray:
        return self.solve(v).phi


def phi_coupled(v, spec: CoupledObstacleSpec, state_grid: GridSpec) -> CoupledObstacleResult:
    return CoupledObstacle(spec, state_grid).solve(v)


def make_obstacle(spec, grid: GridSpec) -> ObstacleMap:
    """Build the callable Phi described by an obstacle spec."""
    if isinstance(spec, ImpulseObstacleSpec):
        return _impulse(spec, grid)
    if isinstance(spec, CoupledObstacleSpec):
        return CoupledObstacle(spec, grid)
    raise TypeError(f"unsupported obstacle spec {type(spec).__name__}")


# ---------------------------------------------------------- property checks

@dataclass
class PropertyReport:
    name: str
    samples: int
    violations: int
    worst_violation: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.violations == 0


def check_increasing(phi: ObstacleMap, samples: int, n: int, rng=None,
                     scale: float = 1.0, tol: float = 1e-10) -> PropertyReport:
    """Sample ordered pairs 0 <= v <= w and test Phi(v) <= Phi(w) + tol."""
    rng = np.random.default_rng(rng)
    worst, bad = 0.0, 0
    for _ in range(samples):
        v = scale * rng.random(n)
        w = v + scale * rng.random(n) * (rng.random(n) < 0.5)
        gap = float(np.max(phi(v) - phi(w)))
        worst = max(worst, gap)
        bad += gap > tol
    return PropertyReport("increasing", samples, bad, worst, tol)


def check_scaling(phi: ObstacleMap, lambdas, samples: int, n: int, rng=None,
                  scale: float = 1.0, tol: float = 1e-10) -> PropertyReport:
    """Test lambda * Phi(y) >= Phi(lambda * y) - tol for random y >= 0."""
    rng = np.random.default_rng(rng)
    worst, bad, count = 0.0, 0, 0
    for _ in range(samples):
        y = scale * rng.random(n)
        py = phi(y)
        for lam in lambdas:
            if lam < 1:
                raise ValueError("scaling check takes lambda >= 1")
            gap = float(np.max(phi(lam * y) - lam * py))
            worst = max(worst, gap)
            bad += gap > tol
            count += 1
    return PropertyReport("scaling", count, bad, worst, tol)
