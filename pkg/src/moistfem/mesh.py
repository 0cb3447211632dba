"""Structured vertical-slice quadrilateral mesh.

Cells are indexed ``c = i * nz + k`` with ``i`` the column and ``k`` the
layer, so a column is contiguous in memory. Facets come in two groups:

* vertical facet ``(i, k)`` is the right-hand face of cell ``(i, k)``; its
  ``+`` side is the cell to the right (wrapping periodically) and its ``-``
  side is ``(i, k)`` itself. Ids ``0 .. nx*nz - 1``.
* horizontal facet ``(i, j)`` with ``j = 0 .. nz`` sits at height ``j*dz``;
  interior ones have the upper cell as ``+``. Ids start at ``nx*nz``.

The normal stored for a facet is the outward normal of its ``+`` cell, so
interior normals are ``-x`` or ``-z`` and lid normals point out of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

VERTICAL = "vertical"
HORIZONTAL = "horizontal"


class MeshError(ValueError):
    """Invalid mesh construction or query."""


@dataclass(frozen=True)
class Mesh:
    nx: int
    nz: int
    Lx: float
    H: float
    periodic_x: bool = True
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dz(self) -> float:
        return self.H / self.nz

    @property
    def num_cells(self) -> int:
        return self.nx * self.nz

    @property
    def num_vertical_facets(self) -> int:
        return self.nx * self.nz

    @property
    def num_horizontal_facets(self) -> int:
        return self.nx * (self.nz + 1)

    @property
    def num_facets(self) -> int:
        return self.num_vertical_facets + self.num_horizontal_facets

    @property
    def cell_area(self) -> float:
        return self.dx * self.dz

    def cell_index(self, i: int, k: int) -> int:
        return (i % self.nx) * self.nz + k

    def cell_ij(self, c: int) -> tuple[int, int]:
        return divmod(int(c), self.nz)

    def cell_centres(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as (nx, nz) arrays."""
        x = (np.arange(self.nx) + 0.5) * self.dx
        z = (np.arange(self.nz) + 0.5) * self.dz
        return np.meshgrid(x, z, indexing="ij")

    def vertical_facet(self, i: int, k: int) -> int:
        return (i % self.nx) * self.nz + k

    def horizontal_facet(self, i: int, j: int) -> int:
        return self.num_vertical_facets + (i % self.nx) * (self.nz + 1) + j

    def _check_facet(self, f: int) -> int:
        f = int(f)
        if not 0 <= f < self.num_facets:
            raise MeshError(f"facet id {f} out of range [0, {self.num_facets})")
        return f

    def facet_kind(self, f: int) -> str:
        f = self._check_facet(f)
        return VERTICAL if f < self.num_vertical_facets else HORIZONTAL

    def facet_neighbors(self, f: int) -> tuple[int, int | None]:
        """Return the ``(+, -)`` cells of a facet; ``-`` is None on a lid."""
        f = self._check_facet(f)
        if f < self.num_vertical_facets:
            i, k = divmod(f, self.nz)
            return self.cell_index(i + 1, k), self.cell_index(i, k)
        i, j = divmod(f - self.num_vertical_facets, self.nz + 1)
        if j == 0:
            return self.cell_index(i, 0), None
        if j == self.nz:
            return self.cell_index(i, self.nz - 1), None
        return self.cell_index(i, j), self.cell_index(i, j - 1)

    def facet_normal(self, f: int) -> np.ndarray:
        """Unit outward normal of the facet's ``+`` cell."""
        f = self._check_facet(f)
        if f < self.num_vertical_facets:
            return np.array([-1.0, 0.0])
        j = (f - self.num_vertical_facets) % (self.nz + 1)
        if j == self.nz:
            return np.array([0.0, 1.0])
        return np.array([0.0, -1.0])

    def facet_measure(self, f: int) -> float:
        return self.dz if self.facet_kind(f) == VERTICAL else self.dx

    def facet_boundary_marker(self, f: int) -> str | None:
        """``"bottom"``, ``"top"`` or None for interior facets."""
        f = self._check_facet(f)
        if f < self.num_vertical_facets:
            return None
        j = (f - self.num_vertical_facets) % (self.nz + 1)
        if j == 0:
            return "bottom"
        if j == self.nz:
            return "top"
        return None

    def cell_facets(self, c: int) -> tuple[int, int, int, int]:
        """Facets of a cell ordered (left, right, bottom, top)."""
        i, k = self.cell_ij(c)
        return (
            self.vertical_facet(i - 1, k),
            self.vertical_facet(i, k),
            self.horizontal_facet(i, k),
            self.horizontal_facet(i, k + 1),
        )

    def cell_outward_normals(self, c: int) -> list[np.ndarray]:
        """Outward normals of the cell for each of its ``cell_facets``."""
        return [
            np.array([-1.0, 0.0]),
            np.array([1.0, 0.0]),
            np.array([0.0, -1.0]),
            np.array([0.0, 1.0]),
        ]


def build_vertical_slice(nx: int, nz: int, Lx: float, H: float) -> Mesh:
    """Uniform periodic-in-x slice of ``nx`` columns and ``nz`` layers."""
    if int(nx) != nx or int(nz) != nz or nx < 1 or nz < 1:
        raise MeshError(f"cell counts must be positive integers, got nx={nx}, nz={nz}")
    if not (Lx > 0 and H > 0) or not np.isfinite(Lx) or not np.isfinite(H):
        raise MeshError(f"extents must be positive, got Lx={Lx}, H={H}")
    return Mesh(int(nx), int(nz), float(Lx), float(H), True)
