"""Componentwise vector-lattice operations and the extremal fixed-point engine.

Grid functions are plain 1-D float arrays in the numerical API; the
componentwise order x <= y means x_i <= y_i for every node.
:class:`GridFunction` attaches a grid to such an array for I/O and for
grid-checked comparisons.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .errors import (
    GridMismatchError,
    MaxIterExceeded,
    MonotonicityViolated,
    NotSubSolution,
    NotSuperSolution,
)
from .grid import GridSpec

log = logging.getLogger(__name__)

# iterates of an increasing map may wobble by this much from inner-solve rounding
MONOTONE_NOISE = 1e-13

Direction = Literal["from_below", "from_above"]
IncreasingMap = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).ravel()
        if v.size != self.grid.size:
            raise GridMismatchError(
                f"{v.size} values for a grid with {self.grid.size} unknowns")
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, GridFunction):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, GridFunction) and isinstance(y, GridFunction) and x.grid != y.grid:
        raise GridMismatchError("grid functions live on different grids")
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise GridMismatchError(f"shape mismatch {xa.shape} vs {ya.shape}")
    return xa, ya


def pos_part(v) -> np.ndarray:
    """Projection onto the nonnegative cone, max(v_i, 0)."""
    return np.maximum(np.asarray(v, dtype=float), 0.0)


def neg_part(v) -> np.ndarray:
    """x^- := x^+ - x, so that x = x^+ - x^-."""
    v = np.asarray(v, dtype=float)
    return pos_part(v) - v


def sup2(x, y) -> np.ndarray:
    """sup(x, y) = x + (y - x)^+."""
    xa, ya = _as_pair(x, y)
    return np.maximum(xa, ya)


def inf2(x, y) -> np.ndarray:
    """inf(x, y) = x - (x - y)^+."""
    xa, ya = _as_pair(x, y)
    return np.minimum(xa, ya)


def leq(x, y) -> bool:
    """Exact componentwise order test; no tolerance."""
    xa, ya = _as_pair(x, y)
    return bool(np.all(xa <= ya))


def leq_with_slack(x, y, slack: float) -> bool:
    """leq(x, y + slack * 1)."""
    xa, ya = _as_pair(x, y)
    return bool(np.all(xa <= ya + slack))


def order_violation(x, y) -> float:
    """Largest amount by which x <= y fails; 0.0 when it holds."""
    xa, ya = _as_pair(x, y)
    if xa.size == 0:
        return 0.0
    return float(max(np.max(xa - ya), 0.0))


@dataclass(frozen=True)
class OrderInterval:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo, up = _as_pair(self.lower, self.upper)
        if not leq(lo, up):
            raise ValueError(
                f"interval lower end exceeds upper end by {order_violation(lo, up):.3e}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", up)

    def contains(self, z, slack: float = 0.0) -> bool:
        return leq_with_slack(self.lower, z, slack) and leq_with_slack(z, self.upper, slack)


@dataclass
class ExtremalReport:
    solution: np.ndarray
    direction: Direction
    iterations: int
    residual: float
    deltas: list[float] = field(default_factory=list)
    worst_monotonicity_violation: float = 0.0


def extremal_fixed_point(
    T: IncreasingMap,
    interval: OrderInterval,
    direction: Direction = "from_below",
    tol: float = 1e-10,
    max_iter: int = 10_000,
    noise: float = MONOTONE_NOISE,
) -> ExtremalReport:
    """Minimal or maximal fixed point of an increasing map on an order interval.

    Kleene iteration y_{k+1} = T(y_k) started from ``interval.lower``
    (``from_below``, minimal fixed point) or ``interval.upper``
    (``from_above``, maximal fixed point). Each step is audited: the sequence
    must be nondecreasing (resp. nonincreasing) up to ``noise``. Iteration
    stops at the first iterate y_k with ||T(y_k) - y_k||_inf <= tol, and y_k
    is returned, so the reported residual is an exact evaluation.
    """
    if direction not in ("from_below", "from_above"):
        raise ValueError(f"unknown direction {direction!r}")
    lower, upper = interval.lower, interval.upper

    t_lower = np.asarray(T(lower), dtype=float)
    if not leq_with_slack(lower, t_lower, noise):
        raise NotSubSolution(
            f"lower end is not a sub-solution (gap {order_violation(lower, t_lower):.3e})")
    t_upper = np.asarray(T(upper), dtype=float)
    if not leq_with_slack(t_upper, upper, noise):
        raise NotSuperSolution(
            f"upper end is not a super-solution (gap {order_violation(t_upper, upper):.3e})")

    sign = 1.0 if direction == "from_below" else -1.0
    y, ty = (lower, t_lower) if direction == "from_below" else (upper, t_upper)
    deltas: list[float] = []
    worst = 0.0
    for k in range(1, max_iter + 1):
        step = ty - y
        backwards = float(max(np.max(-sign * step), 0.0)) if step.size else 0.0
        worst = max(worst, backwards)
        if backwards > noise:
            raise MonotonicityViolated(
                f"{direction} iterate {k} moved the wrong way by {backwards:.3e}")
        delta = float(np.max(np.abs(step))) if step.size else 0.0
        deltas.append(delta)
        if delta <= tol:
            log.debug("extremal %s converged in %d steps", direction, k)
            return ExtremalReport(y.copy(), direction, k, delta, deltas, worst)
        y, ty = ty, np.asarray(T(ty), dtype=float)
    raise MaxIterExceeded(
        f"{direction} iteration did not reach tol={tol:g} in {max_iter} steps "
        f"(last delta {deltas[-1]:.3e})")
