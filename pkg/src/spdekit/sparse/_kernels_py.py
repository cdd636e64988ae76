"""Pure-Python numeric kernels, the fallback when the extension is absent.

Same algorithms and same floating-point operation order as the compiled
versions where that is cheap to guarantee: the factorisation updates touch
distinct indices, so the vectorised forms below are bit-identical to the
scalar loops.  The transposed solve and the selected-inverse accumulations
use ``dot``, whose summation order may differ from the compiled scalar
loop by rounding.
"""

import numpy as np

BACKEND_NAME = "python"


def chol_numeric(up, ui, ux, lp, li, rowptr, rowpat):
    """Up-looking Cholesky on a fixed symbolic layout.

    Consumes the permuted matrix's upper triangle (CSC) and the factor
    layout from the symbolic phase.  Returns (lx, fail) with fail = -1 on
    success, or the elimination step of the first nonpositive pivot.
    """
    n = len(lp) - 1
    lx = np.zeros(int(lp[-1]))
    x = np.zeros(n)
    head = np.ones(n, dtype=np.int64)
    for k in range(n):
        cols = ui[up[k] : up[k + 1]]
        x[cols] = ux[up[k] : up[k + 1]]
        d = x[k]
        x[k] = 0.0
        for t in range(rowptr[k], rowptr[k + 1]):
            j = rowpat[t]
            lkj = x[j] / lx[lp[j]]
            x[j] = 0.0
            a, b = lp[j] + 1, lp[j] + head[j]
            if b > a:
                x[li[a:b]] -= lx[a:b] * lkj
            d -= lkj * lkj
            lx[b] = lkj
            head[j] += 1
        if d <= 0.0 or not np.isfinite(d):
            return lx, k
        lx[lp[k]] = np.sqrt(d)
    return lx, -1


def lsolve(lp, li, lx, b):
    """In-place solve of L y = b for one right-hand side."""
    n = len(lp) - 1
    for j in range(n):
        bj = b[j] / lx[lp[j]]
        b[j] = bj
        a, e = lp[j] + 1, lp[j + 1]
        if e > a:
            b[li[a:e]] -= lx[a:e] * bj


def ltsolve(lp, li, lx, b):
    """In-place solve of L^T x = b for one right-hand side."""
    n = len(lp) - 1
    for j in range(n - 1, -1, -1):
        a, e = lp[j] + 1, lp[j + 1]
        s = b[j]
        if e > a:
            s -= np.dot(lx[a:e], b[li[a:e]])
        b[j] = s / lx[lp[j]]


def takahashi(lp, li, lx):
    """Selected inverse on the factor pattern.

    Returns zx aligned with (lp, li): zx[p] is the inverse entry at the
    position of the factor entry li[p] in column j.  Works column by
    column from the last to the first; every inverse entry it needs is
    either already finished or in the column being built.
    """
    n = len(lp) - 1
    zx = np.zeros_like(lx)
    for j in range(n - 1, -1, -1):
        a, e = lp[j] + 1, lp[j + 1]
        rows = li[a:e]
        ldiag = lx[lp[j]]
        lt = lx[a:e] / ldiag
        for idx in range(len(rows) - 1, -1, -1):
            i = rows[idx]
            s = 0.0
            for t in range(len(rows)):
                k = rows[t]
                if k <= i:
                    c, r = k, i
                else:
                    c, r = i, k
                p = lp[c] + np.searchsorted(li[lp[c] : lp[c + 1]], r)
                s += lt[t] * zx[p]
            zx[a + idx] = -s
        zx[lp[j]] = 1.0 / (ldiag * ldiag) - np.dot(lt, zx[a:e])
    return zx
