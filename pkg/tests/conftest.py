"""Shared fixtures and independent oracles.

The dense oracle below rebuilds the discretized operator flux by flux from
the per-face difference schemes, without reusing the package's collected
stencil coefficients, so agreement is a genuine cross-check.
"""

import numpy as np
import pytest

from anisofield import Anisotropy, ConstantVector, FourierTerm, FourierVectorField, Grid


def dense_flux_operator(grid: Grid, tensor_at) -> np.ndarray:
    """Dense flux-balance matrix assembled face by face.

    ``tensor_at(x, y) -> (h11, h12, h22)`` is evaluated at face centres.
    Row ``(i, j)`` accumulates the four face fluxes; the normal derivative
    uses the two cells sharing the face and the tangential derivative the
    mean of the four surrounding cells.
    """
    M, N = grid.cells_x, grid.cells_y
    hx, hy = grid.step_x, grid.step_y
    n = M * N
    AH = np.zeros((n, n))

    def idx(i, j):
        return (j % N) * M + (i % M)

    for j in range(N):
        for i in range(M):
            r = idx(i, j)
            h11r, h12r, _ = tensor_at(((i + 1) * hx) % grid.width, (j + 0.5) * hy)
            h11l, h12l, _ = tensor_at((i * hx) % grid.width, (j + 0.5) * hy)
            _, h12t, h22t = tensor_at((i + 0.5) * hx, ((j + 1) * hy) % grid.height)
            _, h12b, h22b = tensor_at((i + 0.5) * hx, (j * hy) % grid.height)

            # right face: hy [ h11 (u_{i+1,j} - u_{i,j}) / hx
            #                  + h21 (u_{i,j+1} + u_{i+1,j+1} - u_{i,j-1} - u_{i+1,j-1}) / (4 hy) ]
            AH[r, idx(i + 1, j)] += hy * h11r / hx
            AH[r, idx(i, j)] -= hy * h11r / hx
            for ii, jj, s in ((i, j + 1, 1), (i + 1, j + 1, 1), (i, j - 1, -1), (i + 1, j - 1, -1)):
                AH[r, idx(ii, jj)] += s * h12r / 4.0

            # top face: hx [ h12 (u_{i+1,j+1} + u_{i+1,j} - u_{i-1,j+1} - u_{i-1,j}) / (4 hx)
            #                + h22 (u_{i,j+1} - u_{i,j}) / hy ]
            AH[r, idx(i, j + 1)] += hx * h22t / hy
            AH[r, idx(i, j)] -= hx * h22t / hy
            for ii, jj, s in ((i + 1, j + 1, 1), (i + 1, j, 1), (i - 1, j + 1, -1), (i - 1, j, -1)):
                AH[r, idx(ii, jj)] += s * h12t / 4.0

            # left face: hy [ h11 (u_{i-1,j} - u_{i,j}) / hx
            #                 + h21 (u_{i,j-1} + u_{i-1,j-1} - u_{i-1,j+1} - u_{i,j+1}) / (4 hy) ]
            AH[r, idx(i - 1, j)] += hy * h11l / hx
            AH[r, idx(i, j)] -= hy * h11l / hx
            for ii, jj, s in ((i, j - 1, 1), (i - 1, j - 1, 1), (i - 1, j + 1, -1), (i, j + 1, -1)):
                AH[r, idx(ii, jj)] += s * h12l / 4.0

            # bottom face: hx [ h12 (u_{i-1,j} + u_{i-1,j-1} - u_{i+1,j} - u_{i+1,j-1}) / (4 hx)
            #                   + h22 (u_{i,j-1} - u_{i,j}) / hy ]
            AH[r, idx(i, j - 1)] += hx * h22b / hy
            AH[r, idx(i, j)] -= hx * h22b / hy
            for ii, jj, s in ((i - 1, j, 1), (i - 1, j - 1, 1), (i + 1, j, -1), (i + 1, j - 1, -1)):
                AH[r, idx(ii, jj)] += s * h12b / 4.0
    return AH


def dense_precision(grid: Grid, kappa_sq: float, tensor_at) -> np.ndarray:
    """Dense ``Q = A^T (V I)^{-1} A`` built from :func:`dense_flux_operator`."""
    V = grid.cell_area
    A = V * kappa_sq * np.eye(grid.n_cells) - dense_flux_operator(grid, tensor_at)
    return (A.T @ A) / V


def tensor_fn(aniso: Anisotropy):
    """Pointwise tensor closure for the dense oracle."""

    def at(x, y):
        h11, h12, h22 = aniso.tensor(x, y)
        return float(h11), float(h12), float(h22)

    return at


@pytest.fixture
def grid6() -> Grid:
    return Grid(2.0, 3.0, 6, 6)


@pytest.fixture
def iso_aniso() -> Anisotropy:
    return Anisotropy(1.0, ConstantVector(0.0, 0.0))


@pytest.fixture
def const_aniso() -> Anisotropy:
    # tensor [[5, 4], [4, 5]]: gamma 1 plus strength 8 at 45 degrees
    s = np.sqrt(8.0) / np.sqrt(2.0)
    return Anisotropy(1.0, ConstantVector(s, s))


def fourier_aniso(width: float, height: float, seed: int = 0, gamma: float = 1.5) -> Anisotropy:
    rng = np.random.default_rng(seed)
    terms = []
    for k, l in ((1, 0), (0, 1), (1, 1)):
        a1, b1, a2, b2 = rng.normal(scale=0.6, size=4)
        terms.append(FourierTerm(k, l, a1, b1, a2, b2))
    fld = FourierVectorField(width, height, const=tuple(rng.normal(size=2)), terms=tuple(terms))
    return Anisotropy(gamma, fld)
