"""Finite-volume assembly of the precision matrix.

The operator ``(kappa^2 - div(H grad))`` integrated over each grid cell and
balanced through face fluxes yields the linear map ``A = V kappa^2 I - A_H``
acting on the vector of cell values, where ``A_H`` is a nine-point stencil
built from the tensor evaluated at face centres and ``V`` is the cell area.
Driving the cell-integrated white noise gives the Gaussian field precision

    Q = A^T (V I)^{-1} A

with at most 25 structural nonzeros per row. Each distinct face is
evaluated once and shared by both adjacent cells, which makes the flux
estimates consistent across faces and the stencil rows sum to zero exactly
(constants are annihilated, as the divergence form requires).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .coefficients import Anisotropy
from .grid import Grid

__all__ = [
    "FaceTensors",
    "StencilMatrix",
    "PrecisionModel",
    "StencilAssembler",
    "sample_tensor_on_faces",
    "assemble_anisotropy_matrix",
    "assemble_precision",
    "write_coordinate_format",
]

# neighbour offsets (di, dj) of the nine-point stencil, diagonal first
STENCIL_OFFSETS = (
    (0, 0),
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
)


@dataclass(frozen=True)
class FaceTensors:
    """Tensor components at the distinct faces of a periodic grid.

    ``*_v`` arrays hold values at the vertical faces ``s_{i+1/2, j}``
    (entry ``[j, i]`` is the right face of cell ``(i, j)``) and ``*_h``
    at the horizontal faces ``s_{i, j+1/2}`` (entry ``[j, i]`` is the top
    face). There are ``2 M N`` distinct faces in total; left and bottom
    faces are the wrapped right/top faces of the neighbouring cells.
    """

    h11_v: np.ndarray
    h12_v: np.ndarray
    h22_v: np.ndarray
    h11_h: np.ndarray
    h12_h: np.ndarray
    h22_h: np.ndarray

    @property
    def n_faces(self) -> int:
        return 2 * self.h11_v.size


def sample_tensor_on_faces(grid: Grid, aniso: Anisotropy) -> FaceTensors:
    """Evaluate the diffusion tensor at the centre of every distinct face."""
    xv, yv = grid.vertical_face_arrays()
    h11_v, h12_v, h22_v = aniso.tensor(xv, yv)
    xh, yh = grid.horizontal_face_arrays()
    h11_h, h12_h, h22_h = aniso.tensor(xh, yh)
    return FaceTensors(h11_v, h12_v, h22_v, h11_h, h12_h, h22_h)


def _stencil_coefficients(grid: Grid, faces: FaceTensors) -> dict:
    """The nine coefficient fields of the flux-balance stencil.

    For each cell, collecting the four face fluxes (tensor frozen at the
    face centre, gradient from the compact difference schemes, transverse
    derivatives averaged over the four surrounding cells) produces one
    coefficient per neighbour offset. Off-diagonal tensor components enter
    through the vertical faces (``h21``, i.e. ``h12`` evaluated there) and
    the horizontal faces (``h12``).
    """
    M, N = grid.cells_x, grid.cells_y
    ax = grid.step_y / grid.step_x
    ay = grid.step_x / grid.step_y

    I = np.arange(M)
    J = np.arange(N)[:, None]
    h11_r = faces.h11_v
    h21_r = faces.h12_v
    h11_l = faces.h11_v[J, (I - 1) % M]
    h21_l = faces.h12_v[J, (I - 1) % M]
    h22_t = faces.h22_h
    h12_t = faces.h12_h
    h22_b = faces.h22_h[(J - 1) % N, I]
    h12_b = faces.h12_h[(J - 1) % N, I]

    d_tb = 0.25 * (h12_t - h12_b)
    d_rl = 0.25 * (h21_r - h21_l)
    return {
        (0, 0): -ax * (h11_r + h11_l) - ay * (h22_t + h22_b),
        (1, 0): ax * h11_r + d_tb,
        (-1, 0): ax * h11_l - d_tb,
        (0, 1): ay * h22_t + d_rl,
        (0, -1): ay * h22_b - d_rl,
        (-1, -1): 0.25 * (h12_b + h21_l),
        (1, -1): -0.25 * (h12_b + h21_r),
        (-1, 1): -0.25 * (h12_t + h21_l),
        (1, 1): 0.25 * (h12_t + h21_r),
    }


@dataclass(frozen=True)
class StencilMatrix:
    """Nine-point stencil, kept as one coefficient field per offset.

    ``coefficients[(di, dj)][j, i]`` couples cell ``(i, j)`` to its
    neighbour ``(i + di, j + dj)`` (indices wrapped periodically).
    """

    grid: Grid
    coefficients: dict

    def coefficient(self, di: int, dj: int) -> np.ndarray:
        return self.coefficients[(di, dj)]

    def row_sums(self) -> np.ndarray:
        """Per-cell sum of the nine coefficients (zero in exact arithmetic)."""
        return sum(self.coefficients.values()).ravel()

    def tocsr(self) -> sp.csr_matrix:
        M, N = self.grid.cells_x, self.grid.cells_y
        I, J = np.meshgrid(np.arange(M), np.arange(N))
        rows = (J * M + I).ravel()
        parts_r, parts_c, parts_v = [], [], []
        for (di, dj), coef in self.coefficients.items():
            cols = (((J + dj) % N) * M + (I + di) % M).ravel()
            parts_r.append(rows)
            parts_c.append(cols)
            parts_v.append(np.asarray(coef, dtype=float).ravel())
        mat = sp.coo_matrix(
            (np.concatenate(parts_v), (np.concatenate(parts_r), np.concatenate(parts_c))),
            shape=(M * N, M * N),
        )
        return mat.tocsr()


def assemble_anisotropy_matrix(grid: Grid, faces: FaceTensors) -> StencilMatrix:
    """Assemble the stencil matrix of the diffusion term from face values."""
    return StencilMatrix(grid, _stencil_coefficients(grid, faces))


@dataclass(frozen=True)
class PrecisionModel:
    """Assembled operator and precision of one coefficient configuration."""

    grid: Grid
    kappa_sq: float
    anisotropy: Anisotropy
    stencil: StencilMatrix
    A: sp.csr_matrix
    Q: sp.csc_matrix

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        """Apply the discretized operator, ``V kappa^2 u - A_H u``."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.grid.n_cells:
            raise ValueError(f"field has length {u.shape[-1]}, expected {self.grid.n_cells}")
        return self.A @ u


class StencilAssembler:
    """Assembles precision matrices for many coefficient fields on one grid.

    The sparsity pattern of ``A`` depends only on the grid, so the COO
    index arrays and the permutation into CSR data slots are computed once
    and reused; repeated assembly then only recomputes coefficient values.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        M, N = grid.cells_x, grid.cells_y
        I, J = np.meshgrid(np.arange(M), np.arange(N))
        rows = np.tile((J * M + I).ravel(), len(STENCIL_OFFSETS))
        cols = np.concatenate(
            [(((J + dj) % N) * M + (I + di) % M).ravel() for di, dj in STENCIL_OFFSETS]
        )
        n = grid.n_cells
        # all nine neighbours are distinct for M, N >= 3, so CSR conversion
        # is a pure permutation of the stacked value blocks
        order = sp.coo_matrix((np.arange(rows.size, dtype=np.int64), (rows, cols)), shape=(n, n)).tocsr()
        self._template = sp.csr_matrix(
            (np.zeros(rows.size), order.indices.copy(), order.indptr.copy()), shape=(n, n)
        )
        self._slot_of = np.empty(rows.size, dtype=np.int64)
        self._slot_of[order.data] = np.arange(rows.size, dtype=np.int64)

    def operator_matrix(self, kappa_sq: float, aniso: Anisotropy) -> sp.csr_matrix:
        """The sparse ``A = V kappa^2 I - A_H`` for the given coefficients."""
        if not kappa_sq > 0:
            raise ValueError("kappa_sq must be strictly positive")
        faces = sample_tensor_on_faces(self.grid, aniso)
        coeffs = _stencil_coefficients(self.grid, faces)
        V = self.grid.cell_area
        blocks = []
        for off in STENCIL_OFFSETS:
            c = -np.asarray(coeffs[off], dtype=float).ravel()
            if off == (0, 0):
                c = c + V * kappa_sq
            blocks.append(c)
        A = self._template.copy()
        A.data[self._slot_of] = np.concatenate(blocks)
        return A

    def precision_matrix(self, kappa_sq: float, aniso: Anisotropy) -> sp.csc_matrix:
        A = self.operator_matrix(kappa_sq, aniso)
        return ((A.T @ A) / self.grid.cell_area).tocsc()


def assemble_precision(grid: Grid, kappa_sq: float, aniso: Anisotropy) -> PrecisionModel:
    """Assemble operator and precision matrices for one model.

    ``Q`` is symmetric positive definite by construction and has at most 25
    structural nonzeros per row (the cell, its 8 neighbours and their 8
    neighbours).
    """
    if not kappa_sq > 0:
        raise ValueError("kappa_sq must be strictly positive")
    faces = sample_tensor_on_faces(grid, aniso)
    if np.any(faces.h11_v <= 0) or np.any(faces.h11_v * faces.h22_v - faces.h12_v**2 <= 0):
        raise ValueError("tensor is not positive definite at a vertical face")
    if np.any(faces.h11_h <= 0) or np.any(faces.h11_h * faces.h22_h - faces.h12_h**2 <= 0):
        raise ValueError("tensor is not positive definite at a horizontal face")
    stencil = assemble_anisotropy_matrix(grid, faces)
    V = grid.cell_area
    A = (sp.identity(grid.n_cells, format="csr") * (V * kappa_sq) - stencil.tocsr()).tocsr()
    Q = ((A.T @ A) / V).tocsc()
    return PrecisionModel(grid=grid, kappa_sq=kappa_sq, anisotropy=aniso, stencil=stencil, A=A, Q=Q)


def write_coordinate_format(mat, f) -> None:
    """Write a sparse matrix as ``row col value`` lines (0-based indices).

    Values carry 17 significant digits so the matrix round-trips through
    text exactly; rows are emitted in (row, col) order for diffability.
    """
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    close = False
    if isinstance(f, (str, bytes)) or hasattr(f, "__fspath__"):
        f = open(f, "w")
        close = True
    try:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            f.write(f"{r} {c} {v:.17g}\n")
    finally:
        if close:
            f.close()
