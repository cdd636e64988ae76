"""Symbolic Cholesky analysis: elimination tree, row patterns, factor layout.

The analysis depends only on the sparsity pattern and the permutation, so
factorisations that share a pattern (refactorisation during optimisation)
reuse a cached :class:`Symbolic` object and skip straight to numerics.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class Symbolic:
    """Layout of the lower-triangular factor for one (pattern, ordering) pair.

    ``lp``/``li`` give the CSC structure of L with the diagonal entry first
    in every column.  ``rowptr``/``rowpat`` list, for each row k, the
    strictly-lower column indices of that row in ascending order; this is
    the order the numeric kernel consumes them in.
    """

    n: int
    perm: np.ndarray
    parent: np.ndarray
    lp: np.ndarray
    li: np.ndarray
    rowptr: np.ndarray
    rowpat: np.ndarray

    @property
    def nnz(self):
        return int(self.lp[-1])


def elimination_tree(n, up, ui):
    """Parent array of the elimination tree from the upper-triangular pattern."""
    parent = np.full(n, -1, dtype=np.int64)
    ancestor = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        for p in range(up[k], up[k + 1]):
            i = ui[p]
            # climb with path compression until we reach k's subtree
            while i != -1 and i < k:
                nxt = ancestor[i]
                ancestor[i] = k
                if nxt == -1:
                    parent[i] = k
                i = nxt
    return parent


def analyse(n, up, ui, perm):
    """Run the symbolic phase on the permuted upper-triangular pattern."""
    parent = elimination_tree(n, up, ui)

    # Row patterns: for row k, the columns j < k with L[k, j] != 0.  Each
    # entry of A's row climbs the elimination tree until it hits a node
    # already marked for this row.
    mark = np.full(n, -1, dtype=np.int64)
    rows = []
    counts = np.ones(n, dtype=np.int64)  # the diagonal entries
    for k in range(n):
        mark[k] = k
        reach = []
        for p in range(up[k], up[k + 1]):
            i = ui[p]
            while mark[i] != k:
                mark[i] = k
                reach.append(i)
                i = parent[i]
        reach.sort()
        rows.append(reach)
        for j in reach:
            counts[j] += 1

    lp = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=lp[1:])
    li = np.empty(lp[-1], dtype=np.int64)
    slot = lp[:-1].copy()
    rowptr = np.zeros(n + 1, dtype=np.int64)
    rowpat = np.empty(int(lp[-1]) - n, dtype=np.int64)
    pos = 0
    for k in range(n):
        li[slot[k]] = k
        slot[k] += 1
        for j in rows[k]:
            li[slot[j]] = k
            slot[j] += 1
            rowpat[pos] = j
            pos += 1
        rowptr[k + 1] = pos

    return Symbolic(
        n=n, perm=perm, parent=parent, lp=lp, li=li, rowptr=rowptr, rowpat=rowpat
    )
