"""The QVI  find y <= Phi(y) with <A(y) - f, v - y> >= 0 for all v <= Phi(y),
solved as the fixed-point problem y = S(f, Phi(y)) on [0, S(F, +inf)].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import OperatorSpec, SparseOperator, assemble, solve_unconstrained
from .errors import InvariantViolation, MaxIterExceeded
from .grid import GridSpec
from .obstacles import ObstacleMap, make_obstacle
from .order_lattice import (
    MONOTONE_NOISE,
    OrderInterval,
    extremal_fixed_point,
    leq_with_slack,
    order_violation,
)
from .vi import VISolveParams, complementarity_residual, solve_vi

log = logging.getLogger(__name__)


@dataclass(eq=False)
class QVIInstance:
    """Operator, obstacle map and forcing with 0 <= f <= F_cap."""

    operator: SparseOperator
    obstacle: ObstacleMap
    f: np.ndarray
    F_cap: np.ndarray
    obstacle_spec: object = None

    def __post_init__(self):
        n = self.operator.n
        self.f = np.broadcast_to(np.asarray(self.f, dtype=float), (n,)).copy()
        self.F_cap = np.broadcast_to(np.asarray(self.F_cap, dtype=float), (n,)).copy()
        if np.any(self.f < 0):
            raise ValueError("forcing must satisfy f >= 0")
        if np.any(self.f > self.F_cap):
            raise ValueError("forcing must satisfy f <= F_cap")

    @property
    def grid(self) -> GridSpec:
        return self.operator.grid

    @classmethod
    def build(cls, grid: GridSpec, operator: OperatorSpec, obstacle, f, F_cap=None):
        A = assemble(operator, grid)
        phi = make_obstacle(obstacle, grid)
        return cls(A, phi, f, f if F_cap is None else F_cap, obstacle)

    def with_forcing(self, f, F_cap=None) -> "QVIInstance":
        inst = QVIInstance(self.operator, self.obstacle, f,
                           self.F_cap if F_cap is None else F_cap, self.obstacle_spec)
        # upper end depends only on the cap
        if F_cap is None and "upper" in self.__dict__:
            inst.__dict__["upper"] = self.__dict__["upper"]
        return inst

    def upper_end(self) -> np.ndarray:
        """S(F_cap, +inf), cached."""
        if "upper" not in self.__dict__:
            self.__dict__["upper"] = solve_unconstrained(self.operator, self.F_cap)
        return self.__dict__["upper"]


class QVIMap:
    """y -> S(f, Phi(y)); increasing when Phi is.

    Each VI solve is warm-started from min(y, Phi(y)). Along the monotone
    iterations of the extremal engine this start lies below (resp. above)
    the new solution, so the Gauss-Seidel sweeps approach it from the
    matching side and the outer sequence stays monotone to rounding.
    """

    def __init__(self, inst: QVIInstance, params: VISolveParams | None = None):
        self.inst = inst
        self.params = params or VISolveParams()
        self.evaluations = 0

    def obstacle(self, y) -> np.ndarray:
        return self.inst.obstacle(np.asarray(y, dtype=float))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        self.evaluations += 1
        psi = self.obstacle(y)
        return solve_vi(self.inst.operator, self.inst.f, psi, self.params, y0=y).solution


def qvi_map(inst: QVIInstance, params: VISolveParams | None = None) -> QVIMap:
    return QVIMap(inst, params)


@dataclass
class ExtremalResult:
    y_min: np.ndarray
    y_max: np.ndarray
    interval: OrderInterval
    residuals: tuple[float, float]
    outer_iters: tuple[int, int]
    trace: tuple[list[float], list[float]] = field(default_factory=lambda: ([], []))


def solve_extremal(inst: QVIInstance, tol: float = 1e-10, max_outer: int = 10_000,
                   vi_params: VISolveParams | None = None) -> ExtremalResult:
    """Minimal and maximal QVI solutions m(f), M(f) in [0, S(F_cap, +inf)]."""
    vi_params = vi_params or VISolveParams(tol=tol / 10)
    T = qvi_map(inst, vi_params)
    upper = inst.upper_end()
    interval = OrderInterval(np.zeros(inst.operator.n), upper)
    lo = extremal_fixed_point(T, interval, "from_below", tol, max_outer)
    hi = extremal_fixed_point(T, interval, "from_above", tol, max_outer)

    if not leq_with_slack(lo.solution, hi.solution, MONOTONE_NOISE):
        raise InvariantViolation(
            f"minimal solution exceeds maximal by {order_violation(lo.solution, hi.solution):.3e}")
    if not interval.contains(lo.solution, MONOTONE_NOISE) or \
            not interval.contains(hi.solution, MONOTONE_NOISE):
        raise InvariantViolation("extremal solution left [0, S(F, +inf)]")
    if max(lo.residual, hi.residual) > tol:
        raise InvariantViolation("extremal residual above tolerance")
    return ExtremalResult(lo.solution, hi.solution, interval,
                          (lo.residual, hi.residual), (lo.iterations, hi.iterations),
                          (lo.deltas, hi.deltas))


@dataclass
class QVIResidualReport:
    feasibility_gap: float
    complementarity: float
    fixed_point: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.feasibility_gap, self.complementarity, self.fixed_point) <= self.tol


def verify_solution(inst: QVIInstance, y, tol: float = 1e-8,
                    vi_params: VISolveParams | None = None) -> QVIResidualReport:
    """Residuals of a candidate QVI solution; report only, never raises."""
    y = np.asarray(y, dtype=float)
    T = qvi_map(inst, vi_params or VISolveParams(tol=min(tol, 1e-10) / 10))
    psi = T.obstacle(y)
    feas = float(np.max(np.maximum(y - psi, 0.0), initial=0.0))
    comp = complementarity_residual(inst.operator, inst.f, psi, y)
    fp = float(np.max(np.abs(y - T(y)), initial=0.0))
    return QVIResidualReport(feas, comp, fp, tol)


def iterate_to_fixed_point(T, y0, tol: float = 1e-10, max_iter: int = 5000):
    """Plain Kleene iteration from an arbitrary start; None if it stalls."""
    y = np.asarray(y0, dtype=float)
    for _ in range(max_iter):
        ty = np.asarray(T(y), dtype=float)
        if np.max(np.abs(ty - y), initial=0.0) <= tol:
            return y
        y = ty
    return None


def multistart_map(T, interval: OrderInterval, starts: int, seed=None, tol: float = 1e-10,
                   max_iter: int = 5000, dedup: float = 1e-7) -> list[np.ndarray]:
    """Fixed points reached from random starts uniform in ``interval``.

    Starts that do not converge within ``max_iter`` are dropped (and logged).
    Points closer than ``dedup`` in sup norm are merged.
    """
    rng = np.random.default_rng(seed)
    found: list[np.ndarray] = []
    dropped = 0
    for _ in range(starts):
        z0 = interval.lower + rng.random(interval.lower.shape) * (interval.upper - interval.lower)
        z = iterate_to_fixed_point(T, z0, tol, max_iter)
        if z is None:
            dropped += 1
            continue
        if all(np.max(np.abs(z - p), initial=0.0) > dedup for p in found):
            found.append(z)
    if dropped:
        log.warning("multistart: %d of %d starts did not converge", dropped, starts)
    return found


def multistart_fixed_points(inst: QVIInstance, starts: int, seed=None, tol: float = 1e-10,
                            max_iter: int = 5000, dedup: float = 1e-7) -> list[np.ndarray]:
    T = qvi_map(inst, VISolveParams(tol=tol / 10))
    interval = OrderInterval(np.zeros(inst.operator.n), inst.upper_end())
    return multistart_map(T, interval, starts, seed, tol, max_iter, dedup)


__all__ = [
    "QVIInstance", "QVIMap", "qvi_map", "ExtremalResult", "solve_extremal",
    "QVIResidualReport", "verify_solution", "multistart_fixed_points", "multistart_map",
    "iterate_to_fixed_point", "MaxIterExceeded",
]
