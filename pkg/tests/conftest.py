import numpy as np
import pytest

from qvikit import GridSpec, ImpulseObstacleSpec, OperatorSpec, QVIInstance
from qvikit.obstacles import CoupledObstacleSpec


def impulse_instance(n=64, k=0.1, f=20.0, F_cap=None, alpha=1.0, gamma=0.5):
    grid = GridSpec(1, (1.0,), n + 2)
    return QVIInstance.build(grid, OperatorSpec(), ImpulseObstacleSpec(k, alpha, gamma),
                             np.full(n, f) if np.isscalar(f) else f, F_cap)


def coupled_instance(n=64, k_field=0.1, f=5.0, variant="pos_part_gap", F_cap=None):
    grid = GridSpec(1, (1.0,), n + 2)
    spec = CoupledObstacleSpec(OperatorSpec(a_react=1.0), g_variant=variant, k_field=k_field)
    return QVIInstance.build(grid, OperatorSpec(), spec,
                             np.full(n, f) if np.isscalar(f) else f, F_cap)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
