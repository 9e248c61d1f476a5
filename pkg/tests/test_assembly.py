import io

import numpy as np
import pytest
import scipy.sparse as sp

from anisofield import (
    Anisotropy,
    ConstantVector,
    Grid,
    StencilAssembler,
    assemble_anisotropy_matrix,
    assemble_precision,
    sample_tensor_on_faces,
    write_coordinate_format,
)

from conftest import dense_precision, fourier_aniso, tensor_fn


def test_isotropic_unit_grid_gives_five_point_laplacian():
    # H = I on a square-cell grid: self -4, edge neighbours +1, diagonals 0
    g = Grid(6.0, 6.0, 6, 6)
    aniso = Anisotropy(1.0, ConstantVector(0.0, 0.0))
    stencil = assemble_anisotropy_matrix(g, sample_tensor_on_faces(g, aniso))
    assert np.allclose(stencil.coefficient(0, 0), -4.0)
    for off in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        assert np.allclose(stencil.coefficient(*off), 1.0)
    for off in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        assert np.allclose(stencil.coefficient(*off), 0.0)


def test_cross_term_diagonal_coefficients():
    # H = [[1, 1/2], [1/2, 1]] on square cells: diagonal neighbours +-1/4,
    # plus signs on the (down-left, up-right) pair
    g = Grid(8.0, 8.0, 8, 8)
    aniso = Anisotropy(0.5, ConstantVector(np.sqrt(0.5), np.sqrt(0.5)))
    assert np.allclose(aniso.matrix(0, 0), [[1.0, 0.5], [0.5, 1.0]])
    stencil = assemble_anisotropy_matrix(g, sample_tensor_on_faces(g, aniso))
    assert np.allclose(stencil.coefficient(-1, -1), 0.25)
    assert np.allclose(stencil.coefficient(1, 1), 0.25)
    assert np.allclose(stencil.coefficient(1, -1), -0.25)
    assert np.allclose(stencil.coefficient(-1, 1), -0.25)


def test_row_sums_vanish_for_random_fields():
    g = Grid(3.0, 2.0, 9, 7)
    for seed in range(5):
        aniso = fourier_aniso(g.width, g.height, seed=seed)
        stencil = assemble_anisotropy_matrix(g, sample_tensor_on_faces(g, aniso))
        scale = max(abs(c).max() for c in stencil.coefficients.values())
        assert np.abs(stencil.row_sums()).max() <= 1e-12 * scale
        # and through the sparse matrix as well
        rows = np.asarray(stencil.tocsr().sum(axis=1)).ravel()
        assert np.abs(rows).max() <= 1e-12 * scale


def test_face_count_and_shared_values():
    g = Grid(20.0, 20.0, 10, 10)
    aniso = fourier_aniso(20.0, 20.0, seed=1)
    faces = sample_tensor_on_faces(g, aniso)
    assert faces.n_faces == 2 * g.n_cells
    # the stored arrays are exactly one evaluation per distinct face, so the
    # left face of (i, j) is bitwise the right face of (i-1, j)
    assert faces.h11_v[3, 4] == faces.h11_v[3, (5 - 1) % g.cells_x]


def test_constant_coefficients_make_stencil_symmetric(const_aniso):
    g = Grid(5.0, 5.0, 10, 10)
    AH = assemble_anisotropy_matrix(g, sample_tensor_on_faces(g, const_aniso)).tocsr()
    asym = abs(AH - AH.T).max()
    assert asym <= 1e-12 * abs(AH).max()


@pytest.mark.parametrize("spec_name", ["iso", "const", "fourier"])
def test_dense_oracle_equivalence(spec_name, grid6, iso_aniso, const_aniso):
    aniso = {
        "iso": iso_aniso,
        "const": const_aniso,
        "fourier": fourier_aniso(grid6.width, grid6.height, seed=7),
    }[spec_name]
    kappa_sq = 1.3
    model = assemble_precision(grid6, kappa_sq, aniso)
    Qd = dense_precision(grid6, kappa_sq, tensor_fn(aniso))
    scale = np.abs(Qd).max()
    assert np.abs(model.Q.toarray() - Qd).max() <= 1e-12 * scale


def test_precision_symmetry_and_structure():
    g = Grid(2.0, 2.0, 8, 6)
    aniso = fourier_aniso(g.width, g.height, seed=11)
    Q = assemble_precision(g, 0.7, aniso).Q
    assert abs(Q - Q.T).max() <= 1e-12 * abs(Q).max()
    row_nnz = np.diff(Q.tocsr().indptr)
    assert row_nnz.max() <= 25
    assert row_nnz.min() >= 9


def test_structural_nnz_extremes():
    aniso = fourier_aniso(1.0, 1.0, seed=2)
    # 5x5 and larger: the full 25-point neighbourhood is distinct
    Q5 = assemble_precision(Grid(1.0, 1.0, 5, 5), 1.0, aniso).Q
    assert np.all(np.diff(Q5.tocsr().indptr) == 25)
    # 3x3: every cell is within two steps of every other, Q is fully dense
    Q3 = assemble_precision(Grid(1.0, 1.0, 3, 3), 1.0, aniso).Q
    assert Q3.shape == (9, 9)
    assert np.all(np.diff(Q3.tocsr().indptr) == 9)


def test_apply_A_annihilates_constants(grid6, const_aniso):
    kappa_sq = 2.0
    model = assemble_precision(grid6, kappa_sq, const_aniso)
    c = 3.7
    out = model.apply_A(np.full(grid6.n_cells, c))
    assert np.allclose(out, grid6.cell_area * kappa_sq * c, rtol=1e-12)


def test_apply_A_basis_vector_gives_column(grid6):
    aniso = fourier_aniso(grid6.width, grid6.height, seed=5)
    model = assemble_precision(grid6, 1.0, aniso)
    k = 17
    e = np.zeros(grid6.n_cells)
    e[k] = 1.0
    assert np.allclose(model.apply_A(e), model.A.toarray()[:, k], atol=0)
    with pytest.raises(ValueError):
        model.apply_A(np.zeros(5))


def test_apply_A_matches_fft_application_for_constant_coefficients(const_aniso):
    g = Grid(4.0, 3.0, 8, 6)
    model = assemble_precision(g, 1.5, const_aniso)
    # translation invariance: row 0 of A is the convolution kernel, so the
    # operator diagonalizes in the 2-D Fourier basis
    kernel = model.A.toarray()[0].reshape(g.shape)
    lam = np.conj(np.fft.fft2(kernel))
    rng = np.random.default_rng(0)
    u = rng.standard_normal(g.n_cells)
    via_fft = np.fft.ifft2(np.fft.fft2(u.reshape(g.shape)) * lam).real.ravel()
    assert np.allclose(model.apply_A(u), via_fft, atol=1e-10)


def test_kappa_scaling_identity(grid6):
    # A(c k^2) = A(k^2) + d I with d = (c - 1) k^2 V, so
    # Q(c k^2) x - Q(k^2) x = d (A + A^T) x / V + d^2 x / V
    aniso = fourier_aniso(grid6.width, grid6.height, seed=9)
    kappa_sq, c = 0.8, 3.5
    m1 = assemble_precision(grid6, kappa_sq, aniso)
    m2 = assemble_precision(grid6, c * kappa_sq, aniso)
    d = (c - 1.0) * kappa_sq * grid6.cell_area
    rng = np.random.default_rng(1)
    for _ in range(3):
        x = rng.standard_normal(grid6.n_cells)
        lhs = m2.Q @ x - m1.Q @ x
        rhs = (d * (m1.A @ x + m1.A.T @ x) + d * d * x) / grid6.cell_area
        assert np.allclose(lhs, rhs, rtol=1e-11, atol=1e-11 * np.abs(lhs).max())


def test_assembler_reuse_matches_fresh_assembly(grid6):
    assembler = StencilAssembler(grid6)
    for seed in (0, 1):
        aniso = fourier_aniso(grid6.width, grid6.height, seed=seed)
        fresh = assemble_precision(grid6, 1.1, aniso).Q
        reused = assembler.precision_matrix(1.1, aniso)
        assert abs(fresh - reused).max() == 0.0


def test_invalid_kappa_rejected(grid6, iso_aniso):
    with pytest.raises(ValueError):
        assemble_precision(grid6, 0.0, iso_aniso)
    with pytest.raises(ValueError):
        StencilAssembler(grid6).operator_matrix(-1.0, iso_aniso)


def test_coordinate_format_roundtrip(grid6, const_aniso):
    Q = assemble_precision(grid6, 1.0, const_aniso).Q
    buf = io.StringIO()
    write_coordinate_format(Q, buf)
    rows, cols, vals = [], [], []
    for line in buf.getvalue().splitlines():
        r, c, v = line.split()
        rows.append(int(r))
        cols.append(int(c))
        vals.append(float(v))
    back = sp.coo_matrix((vals, (rows, cols)), shape=Q.shape).tocsc()
    assert abs(Q - back).max() == 0.0
