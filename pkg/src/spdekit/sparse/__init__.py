"""Sparse symmetric matrices, Cholesky factorisation, and selected inversion.

The numeric kernels live in a compiled extension with a pure-Python
fallback (see ``_backend``); everything here is the bookkeeping around
them: canonical lower-triangle storage, fill-reducing ordering, symbolic
caching, sampling, and Matrix Market exchange.
"""

import hashlib
from collections import OrderedDict

import numpy as np
import scipy.io
import scipy.sparse as sp

from .._rng import rng_for
from ..errors import NotPositiveDefiniteError
from ._backend import active_backend, available_backends, kernels
from ._ordering import fill_reducing_permutation
from ._symbolic import analyse

__all__ = [
    "SparseSymMatrix",
    "CholeskyFactor",
    "factorize",
    "sample_gmrf",
    "selected_inverse",
    "write_matrix_market",
    "read_matrix_market",
    "active_backend",
    "available_backends",
]


class SparseSymMatrix:
    """Symmetric sparse matrix holding the lower triangle in CSC form.

    Invariants: square, row indices sorted within each column, every entry
    on or below the diagonal.  :meth:`from_matrix` additionally drops
    explicit zeros; the raw constructor keeps whatever pattern it is
    given (selected inversion wants structural entries even when their
    value rounds to zero).
    """

    __slots__ = ("n", "indptr", "indices", "data")

    def __init__(self, n, indptr, indices, data):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if self.indptr.shape != (self.n + 1,):
            raise ValueError("indptr must have length n + 1")
        if self.indices.shape != self.data.shape:
            raise ValueError("indices and data must have equal length")
        if self.indptr[0] != 0 or np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing from zero")
        if self.indices.size:
            col_of = np.repeat(np.arange(self.n), np.diff(self.indptr))
            if self.indices.max() >= self.n or np.any(self.indices < col_of):
                raise ValueError("entries must lie in the lower triangle")
            same_col = np.diff(col_of) == 0
            if np.any(np.diff(self.indices)[same_col] <= 0):
                raise ValueError("row indices must be strictly increasing per column")

    @classmethod
    def from_matrix(cls, m, tol=1e-10):
        """Build from any dense or scipy-sparse symmetric matrix.

        Symmetry is checked up to ``tol`` times the largest magnitude;
        the lower triangle then becomes the stored representative.
        """
        m = sp.csc_matrix(m)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"matrix must be square, got {m.shape}")
        gap = abs(m - m.T)
        scale = max(abs(m).max(), 1e-300) if m.nnz else 1.0
        if gap.nnz and gap.max() > tol * scale:
            raise ValueError("matrix is not symmetric within tolerance")
        lower = sp.tril(m, format="csc")
        lower.sort_indices()
        lower.eliminate_zeros()
        return cls(m.shape[0], lower.indptr, lower.indices, lower.data)

    @property
    def nnz(self):
        return int(self.data.size)

    def full(self):
        """The full symmetric matrix as scipy CSC."""
        lower = sp.csc_matrix(
            (self.data, self.indices, self.indptr), shape=(self.n, self.n)
        )
        strict = sp.tril(lower, -1)
        return (lower + strict.T).tocsc()

    def toarray(self):
        return self.full().toarray()

    def diagonal(self):
        # The diagonal entry, when present, is the first one in its column.
        out = np.zeros(self.n)
        first = self.indptr[:-1]
        nonempty = np.flatnonzero(first < self.indptr[1:])
        pos = first[nonempty]
        hit = nonempty[self.indices[pos] == nonempty]
        out[hit] = self.data[first[hit]]
        return out

    def pattern_key(self):
        """Hashable fingerprint of the sparsity pattern alone."""
        h = hashlib.sha1()
        h.update(self.indptr.tobytes())
        h.update(self.indices.tobytes())
        return (self.n, h.hexdigest())

    def __repr__(self):
        return f"SparseSymMatrix(n={self.n}, nnz={self.nnz})"


class CholeskyFactor:
    """Result of ``factorize``: P Q P^T = L L^T.

    ``perm[k]`` is the original index eliminated at step k.  Columns of L
    are stored CSC with the diagonal entry first.
    """

    def __init__(self, n, perm, lp, li, lx, ordering):
        self.n = n
        self.perm = perm
        self.lp = lp
        self.li = li
        self.lx = lx
        self.ordering = ordering

    @property
    def nnz_l(self):
        return int(self.lp[-1])

    @property
    def logdet(self):
        """log det Q, twice the log-diagonal sum of L."""
        return 2.0 * float(np.sum(np.log(self.lx[self.lp[:-1]])))

    def solve(self, b):
        """Solve Q x = b; b may be a vector or a column block."""
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.n:
            raise ValueError(f"rhs has leading dimension {b.shape[0]}, expected {self.n}")
        one_d = b.ndim == 1
        cols = b.reshape(self.n, -1)
        out = np.empty_like(cols)
        for c in range(cols.shape[1]):
            y = cols[self.perm, c].copy()
            kernels.lsolve(self.lp, self.li, self.lx, y)
            kernels.ltsolve(self.lp, self.li, self.lx, y)
            out[self.perm, c] = y
        return out[:, 0] if one_d else out.reshape(b.shape)

    def sqrt_solve_t(self, z):
        """x = P^T L^-T z, so that cov(x) = Q^-1 for z standard normal."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n,):
            raise ValueError("z must be a vector of length n")
        y = z.copy()
        kernels.ltsolve(self.lp, self.li, self.lx, y)
        x = np.empty(self.n)
        x[self.perm] = y
        return x

    def l_matrix(self):
        """The factor L as scipy CSC (in the permuted ordering)."""
        return sp.csc_matrix(
            (self.lx, self.li.astype(np.int64), self.lp), shape=(self.n, self.n)
        )

    def reconstruct(self):
        """P^T L L^T P as scipy CSC, for verification."""
        l = self.l_matrix()
        b = (l @ l.T).tocsc()
        inv = np.empty(self.n, dtype=np.int64)
        inv[self.perm] = np.arange(self.n)
        return b[inv][:, inv].tocsc()


_symbolic_cache = OrderedDict()
_SYMBOLIC_CACHE_SIZE = 16


def _as_sym(q):
    if isinstance(q, SparseSymMatrix):
        return q
    return SparseSymMatrix.from_matrix(q)


def factorize(q, ordering="amd"):
    """Sparse Cholesky of a symmetric positive definite matrix.

    ``ordering`` is 'amd' (default) or 'natural'.  Raises
    :class:`NotPositiveDefiniteError` tagged with the failing index when a
    pivot is nonpositive.  Symbolic analysis is cached per pattern, so
    refactorising a matrix with unchanged structure only pays numerics.
    """
    q = _as_sym(q)
    key = (ordering,) + q.pattern_key()
    sym = _symbolic_cache.get(key)
    full = q.full()
    if sym is None:
        perm = fill_reducing_permutation(q.n, full.indptr, full.indices, ordering)
    else:
        perm = sym.perm
    permuted = full[perm][:, perm]
    upper = sp.triu(permuted, format="csc")
    upper.sort_indices()
    up = upper.indptr.astype(np.int64)
    ui = upper.indices.astype(np.int64)
    if sym is None:
        sym = analyse(q.n, up, ui, perm)
        _symbolic_cache[key] = sym
        if len(_symbolic_cache) > _SYMBOLIC_CACHE_SIZE:
            _symbolic_cache.popitem(last=False)
    lx, fail = kernels.chol_numeric(
        up,
        ui,
        np.ascontiguousarray(upper.data, dtype=np.float64),
        sym.lp,
        sym.li,
        sym.rowptr,
        sym.rowpat,
    )
    if fail >= 0:
        raise NotPositiveDefiniteError(index=perm[fail], elimination_step=fail)
    return CholeskyFactor(q.n, perm, sym.lp, sym.li, lx, ordering)


def sample_gmrf(factor, seed, stream=0, mean=None):
    """One draw from N(mean, Q^-1) given the factor of Q.

    Deterministic in (seed, stream): the draw is x = mean + P^T L^-T z with
    z from the counter-based generator keyed by that pair.
    """
    z = rng_for(seed, stream).standard_normal(factor.n)
    x = factor.sqrt_solve_t(z)
    if mean is not None:
        x = x + np.asarray(mean, dtype=np.float64)
    return x


def selected_inverse(factor):
    """Entries of Q^-1 on the sparsity pattern of L + L^T.

    Exact (up to rounding) via the Takahashi recursions, run on the factor
    columns in reverse.  Returns a :class:`SparseSymMatrix` in the original
    ordering; its diagonal holds every marginal variance.
    """
    zx = kernels.takahashi(factor.lp, factor.li, factor.lx)
    n = factor.n
    cols = np.repeat(np.arange(n, dtype=np.int64), np.diff(factor.lp))
    rows_orig = factor.perm[factor.li]
    cols_orig = factor.perm[cols]
    swap = rows_orig < cols_orig
    lo = np.where(swap, cols_orig, rows_orig)
    hi = np.where(swap, rows_orig, cols_orig)
    lower = sp.csc_matrix((zx, (lo, hi)), shape=(n, n))
    lower.sort_indices()
    return SparseSymMatrix(n, lower.indptr, lower.indices, lower.data)


def factor_stats(q, factor):
    """Small key=value summary used by the command line tools."""
    q = _as_sym(q)
    return {
        "n": q.n,
        "nnz_q_lower": q.nnz,
        "nnz_l": factor.nnz_l,
        "fill_ratio": factor.nnz_l / max(q.nnz, 1),
        "ordering": factor.ordering,
        "logdet": factor.logdet,
    }


def write_matrix_market(path, q, comment=""):
    """Write a symmetric matrix in Matrix Market coordinate format.

    Symmetric storage: only the lower triangle is written.
    """
    q = _as_sym(q)
    scipy.io.mmwrite(
        str(path), q.full(), comment=comment, field="real", precision=17,
        symmetry="symmetric",
    )


def read_matrix_market(path):
    m = scipy.io.mmread(str(path))
    return SparseSymMatrix.from_matrix(m)
