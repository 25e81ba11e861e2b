"""Uniform tensor grids on boxes [0, L_1] x ... x [0, L_dim]."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Literal

import numpy as np

Boundary = Literal["dirichlet_zero", "neumann"]


@dataclass(frozen=True)
class GridSpec:
    """A uniform grid in one or two dimensions.

    With ``boundary="dirichlet_zero"`` the unknowns are the interior nodes
    only (boundary values are fixed at zero and eliminated); with
    ``"neumann"`` every node is an unknown. Unknowns are numbered in C order
    over the node multi-index, x varying slowest.
    """

    dim: int
    extent: tuple[float, ...]
    nodes_per_axis: int
    boundary: Boundary = "dirichlet_zero"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        ext = tuple(float(e) for e in np.atleast_1d(self.extent))
        if len(ext) == 1 and self.dim == 2:
            ext = ext * 2
        if len(ext) != self.dim:
            raise ValueError(f"extent needs {self.dim} entries, got {len(ext)}")
        if any(not np.isfinite(e) or e <= 0 for e in ext):
            raise ValueError("extent entries must be positive and finite")
        object.__setattr__(self, "extent", ext)
        if int(self.nodes_per_axis) != self.nodes_per_axis or self.nodes_per_axis < 3:
            raise ValueError("nodes_per_axis must be an integer >= 3")
        object.__setattr__(self, "nodes_per_axis", int(self.nodes_per_axis))
        if self.boundary not in ("dirichlet_zero", "neumann"):
            raise ValueError(f"unknown boundary kind {self.boundary!r}")

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / (self.nodes_per_axis - 1) for e in self.extent)

    @property
    def cell_volume(self) -> float:
        """Lumped quadrature weight h^dim used by every discrete pairing."""
        return float(np.prod(self.spacing))

    @property
    def unknowns_per_axis(self) -> int:
        if self.boundary == "dirichlet_zero":
            return self.nodes_per_axis - 2
        return self.nodes_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.unknowns_per_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.unknowns_per_axis**self.dim

    @property
    def full_shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.dim

    @cached_property
    def full_coordinates(self) -> np.ndarray:
        """Coordinates of every grid node, shape (nodes_per_axis**dim, dim)."""
        axes = [np.linspace(0.0, e, self.nodes_per_axis) for e in self.extent]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @cached_property
    def unknown_index(self) -> np.ndarray:
        """Flat full-grid index of each unknown, in unknown order."""
        full = np.arange(self.nodes_per_axis**self.dim).reshape(self.full_shape)
        if self.boundary == "dirichlet_zero":
            full = full[(slice(1, -1),) * self.dim]
        return full.ravel()

    @property
    def coordinates(self) -> np.ndarray:
        """Coordinates of the unknowns, shape (size, dim)."""
        return self.full_coordinates[self.unknown_index]

    def with_boundary(self, boundary: Boundary) -> "GridSpec":
        return GridSpec(self.dim, self.extent, self.nodes_per_axis, boundary)

    def embed(self, values: np.ndarray) -> np.ndarray:
        """Extend unknown values to the full node set by zero."""
        out = np.zeros(self.nodes_per_axis**self.dim)
        out[self.unknown_index] = values
        return out

    def restrict(self, full_values: np.ndarray) -> np.ndarray:
        return np.asarray(full_values)[self.unknown_index]


def pairing(f: np.ndarray, v: np.ndarray, grid: GridSpec) -> float:
    """Lumped duality pairing <f, v> = h^dim * sum_i f_i v_i."""
    return grid.cell_volume * float(np.dot(f, v))


def h_norm(v: np.ndarray, grid: GridSpec) -> float:
    """Discrete L2 norm consistent with :func:`pairing`."""
    return float(np.sqrt(grid.cell_volume * np.dot(v, v)))
