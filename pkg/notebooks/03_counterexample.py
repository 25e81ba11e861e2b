"""
One-sided approximation of extremal fixed points
================================================

A scalar map with a plateau of fixed points on [a, b].  Approximating it
from below keeps the minimal fixed point, from above the maximal one, but
not the other way around.
"""

from qvikit.stability import ScalarToyMap, run_scalar_counterexample, scalar_extremal

a, b = 0.25, 0.75
T = ScalarToyMap(a, b, "T")
print("m(T), M(T) =", scalar_extremal(T))

rep = run_scalar_counterexample(a, b, [10, 100, 1000])
print(" n     m(R_n)  M(R_n)  m(U_n)  M(U_n)")
for r in rep.rows:
    print(f"{r.n:5d}  {r.m_R:.4f}  {r.M_R:.4f}  {r.m_U:.4f}  {r.M_U:.4f}")
print("M(R_n) stays at a, m(U_n) stays at b:", rep.sharpness_observed)
