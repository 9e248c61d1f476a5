import numpy as np
import pytest
import scipy.sparse as sp
import scipy.stats

from anisofield import (
    Anisotropy,
    ConstantVector,
    Grid,
    NotPositiveDefiniteError,
    PrecisionFactor,
    assemble_precision,
    factorize,
)

from conftest import fourier_aniso


@pytest.fixture(scope="module")
def varying_model():
    g = Grid(2.0, 3.0, 8, 7)
    aniso = fourier_aniso(g.width, g.height, seed=4)
    return g, assemble_precision(g, 1.2, aniso)


def test_factorize_scalar_matrix():
    f = factorize(sp.csc_matrix(np.array([[4.0]])))
    assert f.log_det == pytest.approx(np.log(4.0), abs=1e-15)
    assert f.solve(np.array([2.0]))[0] == pytest.approx(0.5)


def test_log_det_matches_dense(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    sign, logdet = np.linalg.slogdet(model.Q.toarray())
    assert sign == 1.0
    assert f.log_det == pytest.approx(logdet, abs=1e-8)


def test_zeroed_diagonal_raises():
    Q = sp.identity(5, format="csc") * 2.0
    Q = Q.tolil()
    Q[2, 2] = 0.0
    with pytest.raises(NotPositiveDefiniteError):
        PrecisionFactor(Q.tocsc())


def test_indefinite_matrix_raises_with_pivot():
    Q = sp.diags([1.0, -3.0, 2.0]).tocsc()
    with pytest.raises(NotPositiveDefiniteError) as err:
        PrecisionFactor(Q)
    assert err.value.pivot is not None


def test_solve_residual(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    rng = np.random.default_rng(0)
    for _ in range(3):
        b = rng.standard_normal(f.n)
        x = f.solve(b)
        assert np.linalg.norm(model.Q @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_sample_deterministic(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    assert np.array_equal(f.sample(123), f.sample(123))
    assert not np.array_equal(f.sample(123), f.sample(124))
    batch = f.sample(7, size=3)
    assert batch.shape == (3, f.n)


def test_sample_covariance_and_mean(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    m = 4000
    S = f.sample(2024, size=m)
    dense_cov = np.linalg.inv(model.Q.toarray())
    # elementwise agreement within 5 Monte Carlo standard errors
    sd = np.sqrt(np.outer(np.diag(dense_cov), np.diag(dense_cov)) + dense_cov**2)
    err = np.abs(np.cov(S.T) - dense_cov)
    assert np.all(err <= 5.0 * sd / np.sqrt(m))
    marg_sd = np.sqrt(np.diag(dense_cov))
    assert np.all(np.abs(S.mean(axis=0)) <= 4.0 * marg_sd / np.sqrt(m))


def test_mahalanobis_statistic(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    m = 4000
    S = f.sample(99, size=m)
    stat = np.einsum("ij,ij->i", S @ model.Q.toarray(), S)
    assert abs(stat.mean() - f.n) <= 4.0 * np.sqrt(2.0 * f.n / m)


def test_marginal_variances_match_dense_inverse(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    dense = np.diag(np.linalg.inv(model.Q.toarray()))
    assert np.abs(f.marginal_variances() - dense).max() <= 1e-9 * dense.max()


def test_marginal_variances_scaling(varying_model):
    _, model = varying_model
    v1 = PrecisionFactor(model.Q).marginal_variances()
    v2 = PrecisionFactor((4.0 * model.Q).tocsc()).marginal_variances()
    assert np.allclose(v2, v1 / 4.0, rtol=1e-12)


def test_marginal_variances_stationary_spread():
    g = Grid(10.0, 10.0, 16, 16)
    aniso = Anisotropy(1.0, ConstantVector(1.0, -0.5))
    f = PrecisionFactor(assemble_precision(g, 1.0, aniso).Q)
    v = f.marginal_variances()
    assert (v.max() - v.min()) / v.mean() <= 1e-8


def test_correlation_field_properties(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    ref_a, ref_b = 5, 37
    ca = f.correlation_field(ref_a)
    cb = f.correlation_field(ref_b)
    assert ca[ref_a] == 1.0
    assert np.all(ca <= 1.0 + 1e-12) and np.all(ca >= -1.0 - 1e-12)
    # corr(a, b) agrees whichever field it is read from
    assert ca[ref_b] == pytest.approx(cb[ref_a], abs=1e-10)


def test_correlation_reflection_symmetry_of_diagonal_model():
    # tensor [[5, 4], [4, 5]] on a square grid: the model is invariant
    # under swapping x and y, so the correlation field of a reference on
    # the main diagonal must be swap-symmetric; central symmetry holds by
    # translation invariance
    g = Grid(10.0, 10.0, 12, 12)
    s = np.sqrt(4.0)
    aniso = Anisotropy(1.0, ConstantVector(s / np.sqrt(2), s / np.sqrt(2)))
    assert np.allclose(aniso.matrix(0, 0), [[3.0, 2.0], [2.0, 3.0]])
    f = PrecisionFactor(assemble_precision(g, 1.0, aniso).Q)
    ref_ij = (3, 3)
    c = f.correlation_field(g.linear_index(*ref_ij)).reshape(g.shape)
    for da, db in ((1, 2), (4, 1), (2, 5)):
        swap = c[(3 + da) % 12, (3 + db) % 12]
        assert c[(3 + db) % 12, (3 + da) % 12] == pytest.approx(swap, abs=1e-10)
        assert c[(3 - db) % 12, (3 - da) % 12] == pytest.approx(swap, abs=1e-10)


def test_gaussian_log_density_closed_forms():
    f = factorize(sp.diags([1.0, 4.0]).tocsc())
    val = f.gaussian_log_density(np.array([1.0, 1.0]))
    assert val == pytest.approx(-np.log(2 * np.pi) + np.log(2.0) - 2.5, abs=1e-14)
    assert f.gaussian_log_density(np.zeros(2)) == pytest.approx(
        -np.log(2 * np.pi) + 0.5 * np.log(4.0), abs=1e-14
    )
    with pytest.raises(ValueError):
        f.gaussian_log_density(np.zeros(3))


def test_gaussian_log_density_matches_scipy(varying_model):
    _, model = varying_model
    f = PrecisionFactor(model.Q)
    rng = np.random.default_rng(8)
    u = rng.standard_normal(f.n)
    ref = scipy.stats.multivariate_normal(cov=np.linalg.inv(model.Q.toarray())).logpdf(u)
    assert f.gaussian_log_density(u) == pytest.approx(ref, abs=1e-8)
