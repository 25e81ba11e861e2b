"""
Minimal and maximal solutions of an impulse-control QVI
=======================================================

The constraint y <= Phi(y) depends on the unknown.  Iterating
y -> S(f, Phi(y)) from 0 and from S(F, +inf) brackets every solution.
"""

import numpy as np

from qvikit import GridSpec, ImpulseObstacleSpec, OperatorSpec, QVIInstance, solve_extremal
from qvikit.qvi import multistart_fixed_points, verify_solution

grid = GridSpec(1, (1.0,), 66)
inst = QVIInstance.build(grid, OperatorSpec(), ImpulseObstacleSpec(k=0.1), np.full(64, 20.0))

res = solve_extremal(inst)
print("outer iterations (from below, from above):", res.outer_iters)
print("max gap M - m:", np.max(res.y_max - res.y_min))

for name, y in (("m", res.y_min), ("M", res.y_max)):
    r = verify_solution(inst, y)
    print(name, "fixed-point residual", r.fixed_point, "complementarity", r.complementarity)

# random starts inside [0, S(F, +inf)] all land between the extremal solutions
pts = multistart_fixed_points(inst, 20, seed=1)
lo = min(np.min(y - res.y_min) for y in pts)
hi = max(np.max(y - res.y_max) for y in pts)
print(len(pts), "distinct fixed points; bracket slack", lo, hi)

# the coupled obstacle Phi(v) = k z(v) + nu works the same way
from qvikit.obstacles import CoupledObstacleSpec

spec = CoupledObstacleSpec(OperatorSpec(a_react=1.0), k_field=0.1)
coupled = QVIInstance.build(grid, OperatorSpec(), spec, np.full(64, 5.0))
c = solve_extremal(coupled)
print("coupled: contact nodes", int(np.sum(c.y_min >= coupled.obstacle(c.y_min) - 1e-9)))
