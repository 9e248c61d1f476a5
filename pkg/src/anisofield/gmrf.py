"""Linear algebra over assembled precision matrices.

A factorized precision supports solving, log-determinants, exact sampling,
exact marginal variances (selected inversion, not Monte Carlo), correlation
fields and Gaussian log-densities. The factorization is a sparse LDL^T
obtained from SuperLU in symmetric mode with a fill-reducing symmetric
ordering; its validity (symmetric permutation, positive pivots, U = D L^T)
is verified at construction time.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._selinv import takahashi_pattern_inverse

__all__ = ["NotPositiveDefiniteError", "PrecisionFactor", "factorize"]

LOG_2PI = float(np.log(2.0 * np.pi))


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Factorization failed: the matrix is not positive definite.

    ``pivot`` is the index of the offending pivot when known.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class PrecisionFactor:
    """Sparse LDL^T factorization of a symmetric positive definite matrix.

    Immutable after construction; all operations are read-only, so one
    factor can be shared across threads.
    """

    def __init__(self, Q):
        Q = sp.csc_matrix(Q)
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("matrix must be square")
        self.Q = Q
        self.n = Q.shape[0]
        try:
            self._lu = spla.splu(
                Q,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:  # SuperLU reports singularity this way
            raise NotPositiveDefiniteError(f"factorization failed: {exc}") from exc
        d = self._lu.U.diagonal()
        bad = np.nonzero(~(d > 0))[0]
        if bad.size:
            raise NotPositiveDefiniteError(
                f"nonpositive pivot at index {bad[0]}", pivot=int(bad[0])
            )
        if not np.array_equal(self._lu.perm_r, self._lu.perm_c):
            raise NotPositiveDefiniteError("row and column permutations diverged")
        self._d = d
        self._perm = self._lu.perm_r
        self._U = self._lu.U.tocsr()
        L = self._lu.L.tocsc()
        L.sort_indices()
        self._L = L
        # probe that U really is D L^T, i.e. the LU is an LDL^T
        rng = np.random.default_rng(0)
        x = rng.standard_normal(self.n)
        ux = self._U @ x
        err = np.linalg.norm(ux - d * (L.T @ x))
        if err > 1e-8 * max(np.linalg.norm(ux), 1.0):
            raise NotPositiveDefiniteError("factorization is not symmetric (U != D L^T)")
        self._log_det = float(np.log(d).sum())
        self._variances = None

    @property
    def log_det(self) -> float:
        """log determinant of the factored matrix."""
        return self._log_det

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``Q x = b`` (vector or matrix right-hand side)."""
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has leading dimension {b.shape[0]}, expected {self.n}")
        return self._lu.solve(b)

    def sample(self, seed, size: int | None = None) -> np.ndarray:
        """Exact zero-mean samples with covariance ``Q^{-1}``.

        With ``P Q P^T = L D L^T``, each sample is the back-substitution
        ``u = P^T L^{-T} D^{-1/2} z`` for standard normal ``z``, computed
        through the stored triangular factor. Deterministic for a given
        ``seed`` (an int or a ``numpy.random.Generator``). Returns shape
        ``(n,)``, or ``(size, n)`` when ``size`` is given.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        m = 1 if size is None else int(size)
        z = rng.standard_normal((self.n, m))
        # L^T = D^{-1} U, so L^{-T} D^{-1/2} z solves U y = D^{1/2} z
        y = spla.spsolve_triangular(self._U, np.sqrt(self._d)[:, None] * z, lower=False)
        u = y[self._perm].T
        return u[0] if size is None else u

    def marginal_variances(self) -> np.ndarray:
        """Exact diagonal of ``Q^{-1}`` by selected inversion of the factor."""
        if self._variances is None:
            L = self._L
            z = takahashi_pattern_inverse(self.n, L.indptr, L.indices, L.data, self._d)
            diag = z[L.indptr[:-1]]
            self._variances = diag[self._perm]
        return self._variances

    def correlation_field(self, ref: int) -> np.ndarray:
        """Correlations of component ``ref`` with every component.

        Solves ``Q c = e_ref`` and normalizes by the exact marginal
        variances; the value at ``ref`` is exactly 1.
        """
        if not 0 <= ref < self.n:
            raise ValueError(f"reference index {ref} outside 0..{self.n - 1}")
        e = np.zeros(self.n)
        e[ref] = 1.0
        c = self.solve(e)
        var = self.marginal_variances()
        out = c / np.sqrt(c[ref] * var)
        out[ref] = 1.0
        return out

    def gaussian_log_density(self, u: np.ndarray) -> float:
        """log N(u; 0, Q^{-1}) including the 2 pi constant."""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.n,):
            raise ValueError(f"field has shape {u.shape}, expected ({self.n},)")
        quad = float(u @ (self.Q @ u))
        return -0.5 * self.n * LOG_2PI + 0.5 * self._log_det - 0.5 * quad


def factorize(Q) -> PrecisionFactor:
    """Factorize a symmetric positive definite sparse matrix."""
    return PrecisionFactor(Q)
