"""Pure-numpy fallbacks for the compiled kernels.

These materialize the eigenvalue sum grid explicitly; fine for desk-scale
problems, slower and hungrier than the compiled loops for large 2-axis data.
"""

from __future__ import annotations

import numpy as np
from scipy import stats


def sum_grid(eigvals):
    """Broadcast outer sum of per-axis eigenvalue vectors.

    Result has shape ``(d_1, ..., d_K)``; entry at a multi-index is the sum of
    the selected eigenvalues, i.e. the diagonal of the Kronecker sum of the
    diagonalized factors.
    """
    k = len(eigvals)
    grid = np.asarray(eigvals[0], dtype=float).reshape((-1,) + (1,) * (k - 1))
    for ax in range(1, k):
        shape = [1] * k
        shape[ax] = -1
        grid = grid + np.asarray(eigvals[ax], dtype=float).reshape(shape)
    return grid


def ksum_marginals(eigvals):
    """Per-axis sums of the reciprocal eigenvalue grid.

    Returns a list with, for each axis l, the vector whose i-th entry is
    sum over all multi-indices m with m_l = i of 1/(sum of eigenvalues).
    """
    k = len(eigvals)
    recip = 1.0 / sum_grid(eigvals)
    return [
        recip.sum(axis=tuple(a for a in range(k) if a != ax))
        for ax in range(k)
    ]


def ksum_log_det(eigvals):
    """Sum of log over the eigenvalue grid (log-det of the Kronecker sum)."""
    return float(np.log(sum_grid(eigvals)).sum())


def kendall_tau_rows(rows):
    """Pairwise tau-b between rows; nan for constant rows, as scipy reports."""
    rows = np.asarray(rows, dtype=float)
    p = rows.shape[0]
    out = np.ones((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            tau = stats.kendalltau(rows[i], rows[j]).statistic
            out[i, j] = out[j, i] = tau
    return out
