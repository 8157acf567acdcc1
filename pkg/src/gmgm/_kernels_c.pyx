# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Two families of kernels live here: reductions over the implicit grid of
Kronecker-sum eigenvalues (the per-iteration cost of the eigenvalue descent),
and merge-sort Kendall's tau for the rank-correlation Gram substitute.
Pure-numpy equivalents are in ``_kernels_np``; ``kernels`` picks one at import.
"""

from libc.math cimport log, sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()


def ksum_marginals_2(double[::1] a, double[::1] b):
    """Row/column sums of the reciprocal of the 2-axis eigenvalue sum grid.

    Returns (ma, mb) with ma[i] = sum_j 1/(a[i]+b[j]) and
    mb[j] = sum_i 1/(a[i]+b[j]).  Accumulation order: inner loop over b,
    outer over a.
    """
    cdef Py_ssize_t i, j, na = a.shape[0], nb = b.shape[0]
    ma = np.zeros(na)
    mb = np.zeros(nb)
    cdef double[::1] mav = ma, mbv = mb
    cdef double ai, r, acc
    for i in range(na):
        ai = a[i]
        acc = 0.0
        for j in range(nb):
            r = 1.0 / (ai + b[j])
            acc += r
            mbv[j] += r
        mav[i] = acc
    return ma, mb


def ksum_marginals_3(double[::1] a, double[::1] b, double[::1] c):
    """3-axis analogue of :func:`ksum_marginals_2`."""
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0], nc = c.shape[0]
    ma = np.zeros(na)
    mb = np.zeros(nb)
    mc = np.zeros(nc)
    cdef double[::1] mav = ma, mbv = mb, mcv = mc
    cdef double sij, r, acc
    for i in range(na):
        for j in range(nb):
            sij = a[i] + b[j]
            acc = 0.0
            for k in range(nc):
                r = 1.0 / (sij + c[k])
                acc += r
                mcv[k] += r
            mav[i] += acc
            mbv[j] += acc
    return ma, mb, mc


def ksum_log_det_2(double[::1] a, double[::1] b):
    """Sum of log(a[i]+b[j]) over the grid: log-determinant of the
    diagonalized 2-axis Kronecker sum."""
    cdef Py_ssize_t i, j
    cdef double ai, acc = 0.0
    for i in range(a.shape[0]):
        ai = a[i]
        for j in range(b.shape[0]):
            acc += log(ai + b[j])
    return acc


def ksum_log_det_3(double[::1] a, double[::1] b, double[::1] c):
    cdef Py_ssize_t i, j, k
    cdef double sij, acc = 0.0
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            sij = a[i] + b[j]
            for k in range(c.shape[0]):
                acc += log(sij + c[k])
    return acc


cdef Py_ssize_t _merge_count(double[::1] y, double[::1] buf,
                             Py_ssize_t lo, Py_ssize_t mid, Py_ssize_t hi) noexcept:
    # Inversions across the [lo, mid) / [mid, hi) boundary; equal keys are
    # not inversions (left element wins).
    cdef Py_ssize_t i = lo, j = mid, k = lo
    cdef Py_ssize_t inv = 0
    while i < mid and j < hi:
        if y[i] <= y[j]:
            buf[k] = y[i]
            i += 1
        else:
            buf[k] = y[j]
            j += 1
            inv += mid - i
        k += 1
    while i < mid:
        buf[k] = y[i]
        i += 1
        k += 1
    while j < hi:
        buf[k] = y[j]
        j += 1
        k += 1
    for k in range(lo, hi):
        y[k] = buf[k]
    return inv


cdef Py_ssize_t _count_inversions(double[::1] y, double[::1] buf) noexcept:
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t width = 1, lo, mid, hi
    cdef Py_ssize_t inv = 0
    while width < n:
        lo = 0
        while lo + width < n:
            mid = lo + width
            hi = mid + width
            if hi > n:
                hi = n
            inv += _merge_count(y, buf, lo, mid, hi)
            lo = hi
        width *= 2
    return inv


cdef double _tie_pairs(double[::1] v) noexcept:
    # v must be sorted; returns sum over tie groups of t*(t-1)/2.
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double run = 1.0, total = 0.0
    for i in range(1, n):
        if v[i] == v[i - 1]:
            run += 1.0
        else:
            total += run * (run - 1.0) / 2.0
            run = 1.0
    total += run * (run - 1.0) / 2.0
    return total


def kendall_tau_b(cnp.ndarray[double, ndim=1] x, cnp.ndarray[double, ndim=1] y):
    """Tie-corrected Kendall's tau between two vectors, O(n log n).

    Knight's algorithm: lexsort by (x, y), count discordant pairs as merge-sort
    inversions of y.  Returns nan when either vector is constant.
    """
    cdef Py_ssize_t n = x.shape[0]
    perm = np.lexsort((y, x))
    xs = np.ascontiguousarray(x[perm])
    ys = np.ascontiguousarray(y[perm])
    cdef double[::1] xv = xs, yv = ys

    cdef double tot = n * (n - 1.0) / 2.0
    cdef double xtie = 0.0, ntie = 0.0
    cdef double runx = 1.0, runxy = 1.0
    cdef Py_ssize_t i
    for i in range(1, n):
        if xv[i] == xv[i - 1]:
            runx += 1.0
            if yv[i] == yv[i - 1]:
                runxy += 1.0
            else:
                ntie += runxy * (runxy - 1.0) / 2.0
                runxy = 1.0
        else:
            xtie += runx * (runx - 1.0) / 2.0
            runx = 1.0
            ntie += runxy * (runxy - 1.0) / 2.0
            runxy = 1.0
    xtie += runx * (runx - 1.0) / 2.0
    ntie += runxy * (runxy - 1.0) / 2.0

    ysorted = np.sort(ys)
    cdef double ytie = _tie_pairs(ysorted)

    buf = np.empty(n)
    cdef Py_ssize_t dis = _count_inversions(yv, buf)

    if xtie == tot or ytie == tot:
        return float("nan")
    cdef double numer = tot - xtie - ytie + ntie - 2.0 * dis
    return numer / sqrt((tot - xtie) * (tot - ytie))


def kendall_tau_rows(cnp.ndarray[double, ndim=2] rows):
    """Pairwise tau-b between all rows; nan rows (constant) left to the caller."""
    cdef Py_ssize_t p = rows.shape[0], i, j
    out = np.ones((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            out[i, j] = out[j, i] = kendall_tau_b(rows[i], rows[j])
    return out
