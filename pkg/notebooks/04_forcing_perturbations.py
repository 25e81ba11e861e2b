"""
Stability of m(f) and M(f) under perturbed forcing
==================================================

f_n = f (1 + s_n / n) for decreasing, increasing and oscillating signs s_n.
"""

import numpy as np

from qvikit import GridSpec, ImpulseObstacleSpec, OperatorSpec, QVIInstance
from qvikit.stability import PerturbationPlan, run_envelope_perturbation, run_monotone_perturbation

grid = GridSpec(1, (1.0,), 66)
f = np.full(64, 20.0)
inst = QVIInstance.build(grid, OperatorSpec(), ImpulseObstacleSpec(k=0.1), f, 10 * f)

for rule, start in (("decreasing", 1), ("increasing", 2)):
    rep = run_monotone_perturbation(inst, PerturbationPlan(f, rule, 20, start))
    print(rule, "direction violation", rep.worst_direction_violation)
    print("  decay ratios", {k: round(v, 2) for k, v in rep.decay_ratios.items()})

rep = run_envelope_perturbation(inst, PerturbationPlan(f, "oscillating", 20, 2))
print("oscillating: sandwich violation", rep.worst_sandwich_violation)
print(" n    m_H        M_H")
for row in rep.table()[::4]:
    print(f"{row['n']:3d}  {row['m_H']:.3e}  {row['M_H']:.3e}")
