"""Kernel backend selection.

At import time we try the compiled extension and fall back to the numpy
implementations.  Set ``GMGM_PURE_PYTHON=1`` to force the fallback (used by
the kernel benchmark and for debugging).  ``BACKEND`` records the choice.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_np

_force_python = os.environ.get("GMGM_PURE_PYTHON") == "1"
_c = None
if not _force_python:
    try:
        from . import _kernels_c as _c  # type: ignore[no-redef]
    except ImportError:
        _c = None

BACKEND = "compiled" if _c is not None else "python"

sum_grid = _kernels_np.sum_grid


def _as_vectors(eigvals):
    return [np.ascontiguousarray(v, dtype=float) for v in eigvals]


def ksum_marginals(eigvals):
    """Per-axis reductions of the reciprocal Kronecker-sum eigenvalue grid.

    For each axis l of the modality, returns the length-d_l vector whose i-th
    entry sums 1/(eigenvalue sum) over all multi-indices with m_l = i.  The
    grid itself is never materialized on the compiled path (K = 2, 3); other
    axis counts use the numpy grid.
    """
    vecs = _as_vectors(eigvals)
    if _c is not None:
        if len(vecs) == 2:
            return list(_c.ksum_marginals_2(vecs[0], vecs[1]))
        if len(vecs) == 3:
            return list(_c.ksum_marginals_3(vecs[0], vecs[1], vecs[2]))
    if len(vecs) == 1:
        return [1.0 / vecs[0]]
    return _kernels_np.ksum_marginals(vecs)


def ksum_log_det(eigvals):
    """log-det of the Kronecker sum of the diagonalized factors."""
    vecs = _as_vectors(eigvals)
    if _c is not None:
        if len(vecs) == 2:
            return _c.ksum_log_det_2(vecs[0], vecs[1])
        if len(vecs) == 3:
            return _c.ksum_log_det_3(vecs[0], vecs[1], vecs[2])
    if len(vecs) == 1:
        return float(np.log(vecs[0]).sum())
    return _kernels_np.ksum_log_det(vecs)


def ksum_min_sum(eigvals):
    """Smallest eigenvalue of the Kronecker sum: sum of per-axis minima."""
    return float(sum(float(np.min(v)) for v in eigvals))


def kendall_tau_rows(rows):
    """Pairwise tie-corrected Kendall's tau between the rows of a matrix."""
    rows = np.ascontiguousarray(rows, dtype=float)
    if _c is not None:
        return _c.kendall_tau_rows(rows)
    return _kernels_np.kendall_tau_rows(rows)
