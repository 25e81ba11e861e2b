"""qvikit: extremal solutions of upper-obstacle quasi-variational inequalities."""
from .elliptic import OperatorSpec, SparseOperator, assemble, solve_unconstrained
from .grid import GridSpec
from .obstacles import CoupledObstacleSpec, ImpulseObstacleSpec, make_obstacle
from .order_lattice import GridFunction, OrderInterval, extremal_fixed_point
from .qvi import QVIInstance, solve_extremal, verify_solution
from .vi import VISolveParams, solve_vi

__version__ = "0.1.0"
