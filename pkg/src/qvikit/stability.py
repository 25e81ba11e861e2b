"""Stability experiments for the extremal map f -> (m(f), M(f)).

Three protocols:

* a scalar counterexample on the one-node lattice [0, 1], where a
  perturbed map can have fixed points that do not converge to both
  extremal fixed points of the limit;
* monotone perturbations f_n -> f* from above or below;
* oscillating perturbations, controlled by the monotone envelopes
  inf_{m>=n} f_m and sup_{m>=n} f_m.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .elliptic import laplacian, v_norm
from .grid import h_norm
from .errors import DirectionViolated, HypothesisNotMet, SandwichViolated
from .obstacles import check_scaling
from .order_lattice import OrderInterval, extremal_fixed_point, order_violation
from .qvi import QVIInstance, solve_extremal

log = logging.getLogger(__name__)

DIRECTION_TOL = 1e-10
DECAY_FACTOR = 5.0


# ------------------------------------------------------------ scalar toy

Variant = Literal["T", "R", "U"]


@dataclass(frozen=True)
class ScalarToyMap:
    """Increasing maps of [0, 1] with a plateau of fixed points [a, b).

    T(v) = a for v < a, v for a <= v < b, b for v >= b.
    R_n(v) = a for v < 1/n, T(v - 1/n) otherwise.
    U_n(v) = T(v + 1/n) for v < 1 - 1/n, b otherwise.
    """

    a: float
    b: float
    variant: Variant = "T"
    n: int | None = None

    def __post_init__(self):
        if not 0.0 < self.a < self.b < 1.0:
            raise ValueError("need 0 < a < b < 1")
        if self.variant not in ("T", "R", "U"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant != "T":
            if self.n is None or self.n < 1:
                raise ValueError("perturbed variants need an index n >= 1")
            if not (1.0 / self.n < self.a and self.b < 1.0 - 1.0 / self.n):
                raise ValueError("need 1/n < a and b < 1 - 1/n")

    def _T(self, v: float) -> float:
        if v < self.a:
            return self.a
        if v < self.b:
            return v
        return self.b

    def scalar(self, v: float) -> float:
        if self.variant == "T":
            return self._T(v)
        s = 1.0 / self.n
        if self.variant == "R":
            return self.a if v < s else self._T(v - s)
        return self._T(v + s) if v < 1.0 - s else self.b

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.array([self.scalar(float(v)) for v in y])


@dataclass
class CounterexampleRow:
    n: int
    m_R: float
    M_R: float
    m_U: float
    M_U: float


@dataclass
class CounterexampleReport:
    a: float
    b: float
    m_T: float
    M_T: float
    rows: list[CounterexampleRow]
    minimal_converges: bool
    maximal_converges: bool
    sharpness_observed: bool

    @property
    def passed(self) -> bool:
        return self.minimal_converges and self.maximal_converges and self.sharpness_observed


def scalar_extremal(T: ScalarToyMap) -> tuple[float, float]:
    """(m, M) of a toy map via the generic engine; tol 0 demands exact fixed points."""
    interval = OrderInterval(np.zeros(1), np.ones(1))
    lo = extremal_fixed_point(T, interval, "from_below", tol=0.0, max_iter=1_000_000)
    hi = extremal_fixed_point(T, interval, "from_above", tol=0.0, max_iter=1_000_000)
    return float(lo.solution[0]), float(hi.solution[0])


def run_scalar_counterexample(a: float, b: float, n_list) -> CounterexampleReport:
    m_T, M_T = scalar_extremal(ScalarToyMap(a, b))
    rows = []
    for n in n_list:
        m_R, M_R = scalar_extremal(ScalarToyMap(a, b, "R", n))
        m_U, M_U = scalar_extremal(ScalarToyMap(a, b, "U", n))
        rows.append(CounterexampleRow(int(n), m_R, M_R, m_U, M_U))
    # R_n approaches T from below, U_n from above
    minimal = all(r.m_R == m_T for r in rows)
    maximal = all(r.M_U == M_T for r in rows)
    sharp = all(r.M_R == a and r.M_R != M_T and r.m_U == b and r.m_U != m_T for r in rows)
    return CounterexampleReport(a, b, m_T, M_T, rows, minimal, maximal, sharp)


# ------------------------------------------------------- forcing sequences

Rule = Literal["decreasing", "increasing", "oscillating"]


@dataclass(eq=False)
class PerturbationPlan:
    """f_n = f* (1 + s_n delta_n), delta_n = delta_scale / n, n = n_start..n_max.

    s_n is +1 (decreasing rule), -1 (increasing rule) or (-1)^n
    (oscillating rule). Every f_n must satisfy nu <= f_n <= F_cap.
    """

    f_star: np.ndarray
    rule: Rule = "decreasing"
    n_max: int = 20
    n_start: int = 1
    delta_scale: float = 1.0
    nu: float = 0.1
    F_cap: np.ndarray | None = None

    def __post_init__(self):
        self.f_star = np.asarray(self.f_star, dtype=float).ravel()
        if self.rule not in ("decreasing", "increasing", "oscillating"):
            raise ValueError(f"unknown sequence rule {self.rule!r}")
        if not self.nu > 0:
            raise ValueError("need 0 < nu")
        if not 1 <= self.n_start < self.n_max:
            raise ValueError("need 1 <= n_start < n_max")
        if self.delta_scale < 0:
            raise ValueError("delta_scale must be >= 0")
        self.F_cap = (10.0 * self.f_star if self.F_cap is None
                      else np.broadcast_to(np.asarray(self.F_cap, float), self.f_star.shape).copy())
        for n in self.indices:
            fn = self.forcing(n)
            if np.any(fn < self.nu) or np.any(fn > self.F_cap):
                raise ValueError(f"f_{n} leaves [nu, F_cap]")

    @property
    def indices(self) -> range:
        return range(self.n_start, self.n_max + 1)

    def delta(self, n: int) -> float:
        return self.delta_scale / n

    def sign(self, n: int) -> float:
        if self.rule == "decreasing":
            return 1.0
        if self.rule == "increasing":
            return -1.0
        return 1.0 if n % 2 == 0 else -1.0

    def forcing(self, n: int) -> np.ndarray:
        return self.f_star * (1.0 + self.sign(n) * self.delta(n))

    def sequence(self) -> list[np.ndarray]:
        return [self.forcing(n) for n in self.indices]


def envelopes(seq: list[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Tail infima and suprema over a finite horizon."""
    lo, hi = [], []
    run_lo = run_hi = None
    for f in reversed(seq):
        run_lo = f.copy() if run_lo is None else np.minimum(run_lo, f)
        run_hi = f.copy() if run_hi is None else np.maximum(run_hi, f)
        lo.append(run_lo)
        hi.append(run_hi)
    return lo[::-1], hi[::-1]


# ---------------------------------------------------------------- reports

@dataclass
class StabilityReport:
    rule: str
    ns: list[int]
    errors: dict[str, list[float]]
    worst_direction_violation: float = 0.0
    worst_sandwich_violation: float = 0.0
    decay_ratios: dict[str, float] = field(default_factory=dict)
    hypotheses: dict[str, object] = field(default_factory=dict)
    reference: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    solutions: dict[str, list[np.ndarray]] = field(default_factory=dict, repr=False)

    @property
    def decay_ok(self) -> bool:
        return all(r >= DECAY_FACTOR for r in self.decay_ratios.values())

    def table(self) -> list[dict]:
        keys = list(self.errors)
        return [{"n": n, **{k: self.errors[k][i] for k in keys}} for i, n in enumerate(self.ns)]


def _errors(grid, sols, ref, lap) -> tuple[list[float], list[float], list[float]]:
    """Distances to ``ref`` in the lumped L2 (pivot) norm, sup norm and V norm."""
    h = [h_norm(s - ref, grid) for s in sols]
    sup = [float(np.max(np.abs(s - ref), initial=0.0)) for s in sols]
    v = [v_norm(s - ref, grid, lap) for s in sols]
    return h, sup, v


def _decay(errs: list[float]) -> float:
    if errs[0] == 0.0:
        return np.inf
    return errs[0] / errs[-1] if errs[-1] > 0 else np.inf


def _decays(errors: dict) -> dict:
    return {k: _decay(v) for k, v in errors.items() if not k.endswith("_V")}


def _check_scaling_hypothesis(inst: QVIInstance, samples: int, seed) -> dict:
    rep = check_scaling(inst.obstacle, (1.0, 1.5, 2.0, 4.0), samples, inst.operator.n,
                        rng=seed, scale=float(np.max(inst.upper_end())))
    return {"scaling_samples": rep.samples, "scaling_violations": rep.violations,
            "scaling_worst": rep.worst_violation}


def _extremals(template: QVIInstance, F_cap, fs, tol):
    out_m, out_M = [], []
    for f in fs:
        r = solve_extremal(template.with_forcing(f, F_cap), tol=tol)
        out_m.append(r.y_min)
        out_M.append(r.y_max)
    return out_m, out_M


def _monotone_gap(seq, sign) -> float:
    """Worst violation of seq[k] <= seq[k+1] (sign=+1) or >= (sign=-1)."""
    worst = 0.0
    for a, b in zip(seq, seq[1:]):
        worst = max(worst, order_violation(a, b) if sign > 0 else order_violation(b, a))
    return worst


def run_monotone_perturbation(template: QVIInstance, plan: PerturbationPlan,
                              tol: float = 1e-10, check_hypotheses: bool = True,
                              hypothesis_samples: int = 20, seed=0) -> StabilityReport:
    """m(f_n), M(f_n) along a monotone forcing sequence.

    A decreasing sequence must give nonincreasing solutions that stay
    above the limit solutions; an increasing sequence the reverse.
    Raises DirectionViolated on a breach above 1e-10.
    """
    if plan.rule == "oscillating":
        raise ValueError("monotone protocol needs a decreasing or increasing plan")
    hyp = {}
    if check_hypotheses:
        hyp = _check_scaling_hypothesis(template.with_forcing(plan.f_star, plan.F_cap),
                                        hypothesis_samples, seed)
        if hyp["scaling_violations"]:
            raise HypothesisNotMet(
                f"obstacle fails the scaling property ({hyp['scaling_violations']} samples)")
    m_star, M_star = _extremals(template, plan.F_cap, [plan.f_star], tol)
    m_star, M_star = m_star[0], M_star[0]
    ms, Ms = _extremals(template, plan.F_cap, plan.sequence(), tol)

    sign = -1.0 if plan.rule == "decreasing" else 1.0
    worst = max(_monotone_gap(ms, sign), _monotone_gap(Ms, sign))
    for s_m, s_M in zip(ms, Ms):
        if sign < 0:
            worst = max(worst, order_violation(m_star, s_m), order_violation(M_star, s_M))
        else:
            worst = max(worst, order_violation(s_m, m_star), order_violation(s_M, M_star))
    if worst > DIRECTION_TOL:
        raise DirectionViolated(f"{plan.rule} plan: monotone direction broken by {worst:.3e}")

    grid, lap = template.grid, laplacian(template.grid)
    m_h, m_sup, m_v = _errors(grid, ms, m_star, lap)
    M_h, M_sup, M_v = _errors(grid, Ms, M_star, lap)
    errors = {"m_H": m_h, "m_sup": m_sup, "M_H": M_h, "M_sup": M_sup, "m_V": m_v, "M_V": M_v}
    return StabilityReport(plan.rule, list(plan.indices), errors, worst_direction_violation=worst,
                           decay_ratios=_decays(errors),
                           hypotheses=hyp, reference={"m": m_star, "M": M_star},
                           solutions={"m": ms, "M": Ms})


def run_envelope_perturbation(template: QVIInstance, plan: PerturbationPlan,
                              tol: float = 1e-10) -> StabilityReport:
    """Sandwich m(f^_n) <= m(f_n) <= m(f~_n) (and likewise for M) at every n."""
    if plan.rule != "oscillating":
        raise ValueError("envelope protocol needs an oscillating plan")
    seq = plan.sequence()
    lo_env, hi_env = envelopes(seq)
    m_star, M_star = _extremals(template, plan.F_cap, [plan.f_star], tol)
    m_star, M_star = m_star[0], M_star[0]
    ms, Ms = _extremals(template, plan.F_cap, seq, tol)
    m_lo, M_lo = _extremals(template, plan.F_cap, lo_env, tol)
    m_hi, M_hi = _extremals(template, plan.F_cap, hi_env, tol)
    upper = template.with_forcing(plan.f_star, plan.F_cap).upper_end()

    worst = 0.0
    for i in range(len(seq)):
        worst = max(worst,
                    order_violation(np.zeros_like(upper), m_lo[i]),
                    order_violation(m_lo[i], ms[i]), order_violation(ms[i], m_hi[i]),
                    order_violation(M_lo[i], Ms[i]), order_violation(Ms[i], M_hi[i]),
                    order_violation(M_hi[i], upper))
    if worst > DIRECTION_TOL:
        raise SandwichViolated(f"envelope sandwich broken by {worst:.3e}")
    mono = max(_monotone_gap(m_lo, 1.0), _monotone_gap(M_hi, -1.0))

    grid, lap = template.grid, laplacian(template.grid)
    m_h, m_sup, m_v = _errors(grid, ms, m_star, lap)
    M_h, M_sup, M_v = _errors(grid, Ms, M_star, lap)
    errors = {"m_H": m_h, "m_sup": m_sup, "M_H": M_h, "M_sup": M_sup, "m_V": m_v, "M_V": M_v}
    return StabilityReport(plan.rule, list(plan.indices), errors,
                           worst_direction_violation=mono, worst_sandwich_violation=worst,
                           decay_ratios=_decays(errors),
                           reference={"m": m_star, "M": M_star},
                           solutions={"m": ms, "M": Ms, "m_lo": m_lo, "m_hi": m_hi,
                                      "M_lo": M_lo, "M_hi": M_hi})
