import numpy as np
import pytest

from qvikit.grid import GridSpec, h_norm, pairing


def test_dirichlet_unknowns_are_interior_nodes():
    g = GridSpec(1, (2.0,), 5)
    assert g.spacing == (0.5,)
    assert g.size == 3
    np.testing.assert_allclose(g.coordinates[:, 0], [0.5, 1.0, 1.5])


def test_neumann_keeps_every_node():
    g = GridSpec(2, (1.0, 2.0), 4, "neumann")
    assert g.size == 16
    assert g.cell_volume == pytest.approx((1 / 3) * (2 / 3))


def test_embed_restrict_roundtrip():
    g = GridSpec(2, (1.0,), 6)
    v = np.arange(g.size, dtype=float)
    full = g.embed(v)
    assert full.size == 36
    assert np.all(full.reshape(6, 6)[0] == 0) and np.all(full.reshape(6, 6)[:, -1] == 0)
    np.testing.assert_array_equal(g.restrict(full), v)


def test_pairing_is_lumped_quadrature():
    g = GridSpec(1, (1.0,), 11)
    one = np.ones(g.size)
    assert pairing(one, one, g) == pytest.approx(0.9)
    assert h_norm(one, g) == pytest.approx(np.sqrt(0.9))


@pytest.mark.parametrize("kwargs", [
    dict(dim=3, extent=(1.0,), nodes_per_axis=5),
    dict(dim=1, extent=(0.0,), nodes_per_axis=5),
    dict(dim=1, extent=(1.0,), nodes_per_axis=2),
    dict(dim=1, extent=(1.0,), nodes_per_axis=5, boundary="periodic"),
])
def test_invalid_grids_rejected(kwargs):
    with pytest.raises(ValueError):
        GridSpec(**kwargs)
