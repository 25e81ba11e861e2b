"""Box-constrained control of the extremal QVI solutions.

The control is piecewise constant, f = sum_m theta_m * chi(patch m), with
nu_m <= theta_m <= F_m, and the reduced objective is

    J(theta) = J1(m(f), M(f)) + lam/2 |theta|^2.

J1 is either the gap-plus-tracking functional
    1/2 |M(f) - m(f)|_H^2 + 1/2 |y_d - m(f)|_H^2
or the value-tracking functional  int (s - m(f))^2.
Integrals use the lumped h^dim quadrature.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import BudgetExceeded, InadmissibleControl, InvariantViolation
from .grid import h_norm
from .qvi import QVIInstance, solve_extremal

log = logging.getLogger(__name__)

Objective = Literal["singleton_gap_tracking", "value_tracking"]


@dataclass(frozen=True, eq=False)
class ControlParam:
    coefficients: np.ndarray
    partition: np.ndarray

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float).ravel()
        p = np.array(self.partition, dtype=np.int64).ravel()
        if np.any(p < 0) or np.any(p >= c.size):
            raise ValueError("partition labels must lie in 0..M-1")
        if np.unique(p).size != c.size:
            raise ValueError("every patch needs at least one node")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "partition", p)

    @property
    def M(self) -> int:
        return self.coefficients.size

    def forcing(self) -> np.ndarray:
        return self.coefficients[self.partition]


@dataclass(eq=False)
class ControlProblemSpec:
    template: QVIInstance
    partition: np.ndarray
    nu: np.ndarray
    F: np.ndarray
    objective: Objective = "singleton_gap_tracking"
    target: np.ndarray | float = 0.0
    lam: float = 1e-3
    tol: float = 1e-10

    def __post_init__(self):
        self.partition = np.asarray(self.partition, dtype=np.int64).ravel()
        n = self.template.operator.n
        if self.partition.size != n:
            raise ValueError(f"partition needs {n} labels")
        M = int(self.partition.max()) + 1
        self.nu = np.broadcast_to(np.asarray(self.nu, dtype=float), (M,)).copy()
        self.F = np.broadcast_to(np.asarray(self.F, dtype=float), (M,)).copy()
        if not np.all(self.nu > 0):
            raise ValueError("bounds need 0 < nu")
        if np.any(self.F < self.nu):
            raise ValueError("bounds need nu <= F")
        if not self.lam > 0:
            raise ValueError("need lam > 0")
        if self.objective not in ("singleton_gap_tracking", "value_tracking"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == "singleton_gap_tracking":
            self.target = np.broadcast_to(np.asarray(self.target, dtype=float), (n,)).copy()
        else:
            self.target = float(self.target)
        # F_cap is the largest admissible forcing; S(F_cap, +inf) is then shared
        self._base = self.template.with_forcing(self.nu[self.partition], self.F[self.partition])

    @property
    def M(self) -> int:
        return self.nu.size

    def param(self, theta) -> ControlParam:
        return ControlParam(theta, self.partition)

    def check_admissible(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.M:
            raise InadmissibleControl(f"expected {self.M} coefficients, got {theta.size}")
        if np.any(theta < self.nu) or np.any(theta > self.F) or not np.all(np.isfinite(theta)):
            raise InadmissibleControl(f"theta={theta.tolist()} outside [nu, F]")
        return theta

    def instance(self, theta) -> QVIInstance:
        theta = self.check_admissible(theta)
        return self._base.with_forcing(self.param(theta).forcing())


@dataclass
class ObjectiveBreakdown:
    theta: np.ndarray
    gap: float
    tracking: float
    control_cost: float
    total: float
    y_min: np.ndarray = field(repr=False)
    y_max: np.ndarray = field(repr=False)


def evaluate_objective(spec: ControlProblemSpec, theta) -> ObjectiveBreakdown:
    theta = spec.check_admissible(getattr(theta, "coefficients", theta))
    res = solve_extremal(spec.instance(theta), tol=spec.tol)
    grid = spec.template.grid
    m, M = res.y_min, res.y_max
    gap = 0.5 * h_norm(M - m, grid) ** 2
    if spec.objective == "singleton_gap_tracking":
        tracking = 0.5 * h_norm(spec.target - m, grid) ** 2
    else:
        tracking = h_norm(spec.target - m, grid) ** 2
    j1 = gap + tracking if spec.objective == "singleton_gap_tracking" else tracking
    j2 = 0.5 * spec.lam * float(theta @ theta)
    return ObjectiveBreakdown(theta, gap, tracking, j2, j1 + j2, m, M)


class ObjectiveCache:
    """Memoized objective keyed on the exact coefficient bytes."""

    def __init__(self, spec: ControlProblemSpec,
                 fn: Callable[[ControlProblemSpec, np.ndarray], ObjectiveBreakdown] | None = None):
        self.spec = spec
        self.fn = fn or evaluate_objective
        self.store: dict[bytes, ObjectiveBreakdown] = {}

    def __call__(self, theta) -> ObjectiveBreakdown:
        theta = np.asarray(theta, dtype=float).ravel()
        key = theta.tobytes()
        if key not in self.store:
            self.store[key] = self.fn(self.spec, theta)
        return self.store[key]

    @property
    def evaluations(self) -> int:
        return len(self.store)


@dataclass
class OptimizationReport:
    method: str
    argmin: np.ndarray
    value: float
    table: list[tuple[tuple[float, ...], float]]
    trace: list[float] = field(default_factory=list)
    evaluations: int = 0
    best: ObjectiveBreakdown | None = field(default=None, repr=False)

    @property
    def certificate(self) -> bool:
        """The reported minimum is <= every evaluated value."""
        return all(self.value <= v for _, v in self.table)


def grid_axes(lo, hi, points: int) -> list[np.ndarray]:
    return [np.linspace(a, b, points) for a, b in zip(lo, hi)]


def grid_search(spec: ControlProblemSpec, points: int = 11, box=None,
                max_evaluations: int = 10_000, cache: ObjectiveCache | None = None,
                ) -> OptimizationReport:
    """Exhaustive search on the tensor grid over the box (default [nu, F]).

    Points are visited in lexicographic order and only a strictly smaller
    value replaces the incumbent, so ties go to the lexicographically
    smallest theta.
    """
    if points < 2:
        raise ValueError("need at least 2 points per axis")
    lo, hi = (spec.nu, spec.F) if box is None else (np.asarray(box[0], float), np.asarray(box[1], float))
    total = points ** spec.M
    if spec.M > 3 or total > max_evaluations:
        raise BudgetExceeded(f"{points}^{spec.M} = {total} evaluations exceed the budget")
    cache = cache or ObjectiveCache(spec)
    table = []
    best = None
    for theta in itertools.product(*grid_axes(lo, hi, points)):
        ob = cache(np.array(theta))
        table.append((tuple(float(t) for t in theta), ob.total))
        if best is None or ob.total < best.total:
            best = ob
    return OptimizationReport("grid_search", best.theta.copy(), best.total, table,
                              [best.total], cache.evaluations, best)


_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, a: float, b: float, xtol: float) -> float:
    c, d = b - _INV_PHI * (b - a), a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > xtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def coordinate_descent(spec: ControlProblemSpec, init, tol_J: float = 1e-12,
                       max_rounds: int = 20, xtol_rel: float = 1e-4,
                       cache: ObjectiveCache | None = None) -> OptimizationReport:
    """Cyclic golden-section line searches over each coordinate's box interval.

    A coordinate move is accepted only if it strictly lowers J (the
    endpoints and the current value are always among the candidates), so
    the recorded trace is nonincreasing. Stops when a round improves J by
    less than ``tol_J``.
    """
    cache = cache or ObjectiveCache(spec)
    theta = spec.check_admissible(getattr(init, "coefficients", init)).copy()
    current = cache(theta)
    trace = [current.total]
    for _ in range(max_rounds):
        start = current.total
        for m in range(spec.M):
            def line(t, m=m):
                trial = theta.copy()
                trial[m] = t
                return cache(trial).total

            lo, hi = spec.nu[m], spec.F[m]
            cands = [_golden_section(line, lo, hi, xtol_rel * (hi - lo)), lo, hi]
            for t in cands:
                trial = theta.copy()
                trial[m] = t
                ob = cache(trial)
                if ob.total < current.total:
                    theta, current = trial, ob
            if current.total > trace[-1]:
                raise InvariantViolation("coordinate descent trace increased")
            trace.append(current.total)
        if start - current.total < tol_J:
            break
    table = [(tuple(float(x) for x in np.frombuffer(k)), ob.total) for k, ob in cache.store.items()]
    return OptimizationReport("coordinate_descent", theta.copy(), current.total, table, trace,
                              cache.evaluations, current)


@dataclass
class WellPosednessReport:
    levels: list[int]
    minima: list[float]
    argmins: list[np.ndarray]
    nonincreasing: bool
    argmins_in_box: bool


def refinement_study(spec: ControlProblemSpec, levels=(6, 11, 21),
                     cache: ObjectiveCache | None = None) -> WellPosednessReport:
    """Grid search on nested grids; minima must not increase under refinement."""
    levels = list(levels)
    for p, q in zip(levels, levels[1:]):
        if (q - 1) % (p - 1):
            raise ValueError(f"grids with {p} and {q} points per axis are not nested")
    cache = cache or ObjectiveCache(spec)
    reps = [grid_search(spec, p, cache=cache, max_evaluations=max(10_000, p ** spec.M))
            for p in levels]
    minima = [r.value for r in reps]
    argmins = [r.argmin for r in reps]
    inc = all(b <= a for a, b in zip(minima, minima[1:]))
    inside = all(np.all(a >= spec.nu) and np.all(a <= spec.F) for a in argmins)
    return WellPosednessReport(levels, minima, argmins, inc, inside)
