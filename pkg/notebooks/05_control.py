"""
Choosing the forcing on two patches
===================================

Minimize  1/2|M - m|^2 + 1/2|y_d - m|^2 + lam/2 |theta|^2  over
piecewise-constant forcings with nu <= theta <= F.
"""

import numpy as np

from qvikit import GridSpec, ImpulseObstacleSpec, OperatorSpec, QVIInstance
from qvikit.control import (ControlProblemSpec, ObjectiveCache, coordinate_descent,
                            grid_search, refinement_study)

grid = GridSpec(1, (1.0,), 34)
n = 32
template = QVIInstance.build(grid, OperatorSpec(), ImpulseObstacleSpec(k=0.1), np.ones(n))
spec = ControlProblemSpec(template, (np.arange(n) * 2) // n, nu=1.0, F=20.0, target=0.3)

cache = ObjectiveCache(spec)
gs = grid_search(spec, 11, cache=cache)
print("grid argmin", gs.argmin, "J =", gs.value)

cd = coordinate_descent(spec, gs.argmin, cache=cache)
print("descent argmin", cd.argmin.round(4), "J =", cd.value)
print("gap term at the optimum", cd.best.gap)

wp = refinement_study(spec, (6, 11, 21), cache=cache)
print("minima on nested grids", [round(m, 6) for m in wp.minima], "nonincreasing:", wp.nonincreasing)
