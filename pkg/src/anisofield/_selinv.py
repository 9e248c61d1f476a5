"""Takahashi selected inversion over a sparse LDL^T factor (numba kernel)."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def takahashi_pattern_inverse(n, indptr, indices, data, d):
    """Entries of the inverse on the sparsity pattern of the factor.

    ``indptr/indices/data`` describe the unit lower-triangular factor L in
    CSC with sorted row indices and the unit diagonal stored first in each
    column; ``d`` is the diagonal of D. Returns the array ``z`` aligned
    with ``data`` holding ``(L D L^T)^{-1}`` at the pattern positions; the
    diagonal of the inverse sits at each column's first slot.

    Columns are processed last to first. The entries of a column depend
    only on inverse entries at index pairs drawn from that column's
    nonzero set, which by the chordality of the filled pattern all lie in
    already-processed columns, so the column update reduces to gathering a
    dense clique block and one dense matrix-vector product.
    """
    z = np.zeros_like(data)
    maxm = 0
    for j in range(n):
        m = indptr[j + 1] - indptr[j] - 1
        if m > maxm:
            maxm = m
    zs = np.empty((maxm, maxm))
    w = np.empty(maxm)

    for j in range(n - 1, -1, -1):
        lo = indptr[j]
        hi = indptr[j + 1]
        m = hi - lo - 1
        if m == 0:
            z[lo] = 1.0 / d[j]
            continue
        # gather the clique block Z[S, S], S = rows below the diagonal
        for bi in range(m):
            b = indices[lo + 1 + bi]
            p = indptr[b]
            for ai in range(bi, m):
                a = indices[lo + 1 + ai]
                while indices[p] < a:
                    p += 1
                zs[ai, bi] = z[p]
                zs[bi, ai] = z[p]
        # column update: Z[S, j] = -Z[S, S] L[S, j],
        # Z[j, j] = 1/d_j - L[S, j]^T Z[S, j]
        for ai in range(m):
            s = 0.0
            for bi in range(m):
                s += zs[ai, bi] * data[lo + 1 + bi]
            w[ai] = s
        acc = 0.0
        for ai in range(m):
            z[lo + 1 + ai] = -w[ai]
            acc += data[lo + 1 + ai] * w[ai]
        z[lo] = 1.0 / d[j] + acc
    return z
