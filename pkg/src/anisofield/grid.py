"""Geometry and indexing of the periodic regular rectangular grid.

The domain ``[0, width] x [0, height]`` is divided into ``cells_x * cells_y``
rectangular cells with opposite edges identified, so every cell has a full
set of neighbours and all coordinates wrap modulo the domain lengths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Grid"]


@dataclass(frozen=True)
class Grid:
    """Regular periodic grid of rectangular cells.

    Parameters
    ----------
    width, height : float
        Domain extents in the x and y directions, strictly positive.
    cells_x, cells_y : int
        Number of cells per direction. At least 3 each: on a 2-cell torus
        the left and right neighbour columns coincide and the nine-point
        stencil formulas no longer address distinct cells, so such grids
        are rejected rather than silently merging coefficients.

    Cells are numbered ``(i, j)`` with ``i`` the column (x direction) and
    ``j`` the row (y direction), both 0-based and interpreted modulo the
    cell counts. Instances are immutable and safe to share across threads.
    """

    width: float
    height: float
    cells_x: int
    cells_y: int

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("domain extents must be strictly positive")
        if int(self.cells_x) != self.cells_x or int(self.cells_y) != self.cells_y:
            raise ValueError("cell counts must be integers")
        if self.cells_x < 3 or self.cells_y < 3:
            raise ValueError("need at least 3 cells per direction")
        if abs(self.step_x * self.cells_x - self.width) > 1e-12 * self.width:
            raise ValueError("step_x * cells_x does not reproduce the width")
        if abs(self.step_y * self.cells_y - self.height) > 1e-12 * self.height:
            raise ValueError("step_y * cells_y does not reproduce the height")

    @property
    def step_x(self) -> float:
        return self.width / self.cells_x

    @property
    def step_y(self) -> float:
        return self.height / self.cells_y

    @property
    def cell_area(self) -> float:
        return self.step_x * self.step_y

    @property
    def n_cells(self) -> int:
        return self.cells_x * self.cells_y

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(cells_y, cells_x)`` of row-major cell fields."""
        return (self.cells_y, self.cells_x)

    # -- indexing ----------------------------------------------------------

    def linear_index(self, i: int, j: int) -> int:
        """Row-major index ``(j mod N) * M + (i mod M)`` of cell ``(i, j)``."""
        return (j % self.cells_y) * self.cells_x + (i % self.cells_x)

    def cell_of_index(self, index: int) -> tuple[int, int]:
        """Inverse of :meth:`linear_index` for ``0 <= index < n_cells``."""
        if not 0 <= index < self.n_cells:
            raise ValueError(f"index {index} outside 0..{self.n_cells - 1}")
        return index % self.cells_x, index // self.cells_x

    # -- geometry ----------------------------------------------------------

    def wrap_point(self, x, y):
        """Map coordinates into ``[0, width) x [0, height)``."""
        return np.mod(x, self.width), np.mod(y, self.height)

    def cell_center(self, i: int, j: int) -> tuple[float, float]:
        """Centroid ``((i + 1/2) h_x, (j + 1/2) h_y)`` of cell ``(i, j)``."""
        i, j = i % self.cells_x, j % self.cells_y
        return ((i + 0.5) * self.step_x, (j + 0.5) * self.step_y)

    def face_centers(self, i: int, j: int):
        """Centres of the four faces of cell ``(i, j)``.

        Returns points ``(right, top, left, bottom)``, each wrapped into
        the fundamental domain, so that shared faces of neighbouring cells
        produce identical coordinates.
        """
        cx, cy = self.cell_center(i, j)
        hx2, hy2 = 0.5 * self.step_x, 0.5 * self.step_y
        pts = [(cx + hx2, cy), (cx, cy + hy2), (cx - hx2, cy), (cx, cy - hy2)]
        return tuple(self.wrap_point(x, y) for x, y in pts)

    # -- bulk coordinate arrays (shape (cells_y, cells_x)) ------------------

    def cell_center_arrays(self):
        """Coordinates of all cell centroids as ``(X, Y)`` arrays."""
        x = (np.arange(self.cells_x) + 0.5) * self.step_x
        y = (np.arange(self.cells_y) + 0.5) * self.step_y
        return np.meshgrid(x, y)

    def vertical_face_arrays(self):
        """Centres of the faces between columns ``i`` and ``i + 1``.

        Entry ``[j, i]`` is the right face of cell ``(i, j)``; the left
        face of cell ``(i, j)`` is entry ``[j, i - 1 mod M]``.
        """
        x = np.mod((np.arange(self.cells_x) + 1.0) * self.step_x, self.width)
        y = (np.arange(self.cells_y) + 0.5) * self.step_y
        return np.meshgrid(x, y)

    def horizontal_face_arrays(self):
        """Centres of the faces between rows ``j`` and ``j + 1``.

        Entry ``[j, i]`` is the top face of cell ``(i, j)``.
        """
        x = (np.arange(self.cells_x) + 0.5) * self.step_x
        y = np.mod((np.arange(self.cells_y) + 1.0) * self.step_y, self.height)
        return np.meshgrid(x, y)

    def half_step_lattice(self):
        """The ``2N x 2M`` lattice of half-step points.

        Point ``[b, a]`` is ``(a h_x / 2, b h_y / 2)``; cell centres sit at
        odd ``(a, b)`` and face centres at mixed parity, so one evaluation
        of a field on this lattice covers every point the finite-volume
        scheme needs.
        """
        x = np.arange(2 * self.cells_x) * (0.5 * self.step_x)
        y = np.arange(2 * self.cells_y) * (0.5 * self.step_y)
        return np.meshgrid(x, y)
