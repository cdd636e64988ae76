# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled numeric kernels: up-looking Cholesky, triangular solves,
selected inversion.  Mirrors _kernels_py; see that module for the
algorithm notes."""

import numpy as np

from libc.math cimport isfinite, sqrt

BACKEND_NAME = "cython"


def chol_numeric(const long long[::1] up, const long long[::1] ui,
                 const double[::1] ux, const long long[::1] lp,
                 const long long[::1] li, const long long[::1] rowptr,
                 const long long[::1] rowpat):
    cdef Py_ssize_t n = lp.shape[0] - 1
    lx_arr = np.zeros(lp[n])
    head_arr = np.ones(n, dtype=np.int64)
    x_arr = np.zeros(n)
    cdef double[::1] lx = lx_arr
    cdef long long[::1] head = head_arr
    cdef double[::1] x = x_arr
    cdef Py_ssize_t k, t, p
    cdef long long j, a, b
    cdef double d, lkj
    for k in range(n):
        for p in range(up[k], up[k + 1]):
            x[ui[p]] = ux[p]
        d = x[k]
        x[k] = 0.0
        for t in range(rowptr[k], rowptr[k + 1]):
            j = rowpat[t]
            lkj = x[j] / lx[lp[j]]
            x[j] = 0.0
            a = lp[j] + 1
            b = lp[j] + head[j]
            for p in range(a, b):
                x[li[p]] -= lx[p] * lkj
            d -= lkj * lkj
            lx[b] = lkj
            head[j] += 1
        if d <= 0.0 or not isfinite(d):
            return lx_arr, k
        lx[lp[k]] = sqrt(d)
    return lx_arr, -1


def lsolve(const long long[::1] lp, const long long[::1] li,
           const double[::1] lx, double[::1] b):
    cdef Py_ssize_t n = lp.shape[0] - 1
    cdef Py_ssize_t j, p
    cdef double bj
    for j in range(n):
        bj = b[j] / lx[lp[j]]
        b[j] = bj
        for p in range(lp[j] + 1, lp[j + 1]):
            b[li[p]] -= lx[p] * bj


def ltsolve(const long long[::1] lp, const long long[::1] li,
            const double[::1] lx, double[::1] b):
    cdef Py_ssize_t n = lp.shape[0] - 1
    cdef Py_ssize_t j, p
    cdef double s
    for j in range(n - 1, -1, -1):
        s = b[j]
        for p in range(lp[j] + 1, lp[j + 1]):
            s -= lx[p] * b[li[p]]
        b[j] = s / lx[lp[j]]


cdef inline long long _find(const long long[::1] li, long long lo,
                            long long hi, long long row) nogil:
    # binary search for row in li[lo:hi); the entry is structurally present
    cdef long long mid
    while lo < hi:
        mid = (lo + hi) // 2
        if li[mid] < row:
            lo = mid + 1
        else:
            hi = mid
    return lo


def takahashi(const long long[::1] lp, const long long[::1] li,
              const double[::1] lx):
    cdef Py_ssize_t n = lp.shape[0] - 1
    zx_arr = np.zeros(lp[n])
    cdef double[::1] zx = zx_arr
    lt_arr = np.zeros(lp[n])
    cdef double[::1] lt = lt_arr
    cdef long long j, a, e, idx, t, p, i, k, c, r
    cdef double s, ldiag
    for j in range(n - 1, -1, -1):
        a = lp[j] + 1
        e = lp[j + 1]
        ldiag = lx[lp[j]]
        for t in range(a, e):
            lt[t] = lx[t] / ldiag
        for idx in range(e - 1, a - 1, -1):
            i = li[idx]
            s = 0.0
            for t in range(a, e):
                k = li[t]
                if k <= i:
                    c = k
                    r = i
                else:
                    c = i
                    r = k
                p = _find(li, lp[c], lp[c + 1], r)
                s += lt[t] * zx[p]
            zx[idx] = -s
        s = 0.0
        for t in range(a, e):
            s += lt[t] * zx[t]
        zx[lp[j]] = 1.0 / (ldiag * ldiag) - s
    return zx_arr
