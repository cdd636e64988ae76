"""Fields with non-integer smoothness via rational operator approximation.

For integer alpha the precision matrix is a polynomial in the scaled
operator L = C^{-1/2} (kappa^2 C + G) C^{-1/2} and :mod:`.precision`
builds it directly.  A fractional power L^{-alpha} has no sparse
representation, so we split alpha = k + s with integer k and s in (0, 1)
and replace x^{s/2} by a rational function n(x)/d(x) fitted on an
interval that brackets the spectrum of L.  The field is then u = P x
where

    P   = diag(1/tau) C^{-1/2} d(L)
    x ~ N(0, Q_x^{-1}),   Q_x = n(L) L^k n(L)

so that cov(u) = P Q_x^{-1} P^T = tau^{-2} C^{-1/2} (d/n)(L)^2 L^{-k}
C^{-1/2}, which approaches tau^{-2} C^{-1/2} L^{-alpha} C^{-1/2} as the
fit improves.  Both P and Q_x stay sparse because they are polynomials
in L.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import FemMatrices, assemble_fem
from .errors import NumericalError
from .precision import FieldModel, _per_vertex
from .sparse import CholeskyFactor, SparseSymMatrix, factorize, sample_gmrf

_FRACTION_TOL = 1e-12


@dataclass(frozen=True)
class RationalApprox:
    """Rational fit n(x)/d(x) to x^power on a closed positive interval.

    ``num`` and ``den`` hold monomial coefficients in ascending order of
    the unscaled variable x.  ``sup_error`` is the largest absolute
    error observed on a dense evaluation grid, so it is a certificate
    for the grid rather than the whole interval; the grid is fine
    enough (10^4 points) that the distinction has never mattered at the
    degrees used here.
    """

    power: float
    interval: tuple
    degree: int
    num: np.ndarray
    den: np.ndarray
    sup_error: float

    def evaluate(self, x):
        x = np.asarray(x, dtype=np.float64)
        num = np.polyval(self.num[::-1], x)
        den = np.polyval(self.den[::-1], x)
        return num / den


def _eval_poly_matrix(coeffs, operator):
    """Horner evaluation of a monomial polynomial at a sparse matrix."""
    n = operator.shape[0]
    eye = sp.identity(n, format="csr")
    result = coeffs[-1] * eye
    for c in coeffs[-2::-1]:
        result = result @ operator + c * eye
    return result.tocsr()


def rational_fit(power, interval, degree, grid_points=2000):
    """Fit x^power ~ n(x)/d(x) with deg(n) = deg(d) = degree.

    Only exponents in (0, 1) are accepted; integer parts of the operator
    power are applied exactly and must be split off by the caller.  The
    fit minimises a weighted linearised residual f*d - n over a
    geometric grid, with Lawson-style reweighting pushing it towards the
    minimax solution.  Working in the scaled variable x/hi keeps the
    Vandermonde blocks well conditioned; coefficients are rescaled back
    to x before returning.
    """
    if not 0.0 < power < 1.0:
        raise ValueError(f"power must lie strictly in (0, 1), got {power}")
    lo, hi = float(interval[0]), float(interval[1])
    if not (0.0 < lo < hi) or not np.isfinite(hi):
        raise ValueError(f"interval must satisfy 0 < lo < hi, got {interval}")
    degree = int(degree)
    if degree < 1:
        raise ValueError("degree must be at least 1")

    t = np.geomspace(lo / hi, 1.0, grid_points)
    f = (t * hi) ** power
    vand = np.vander(t, degree + 1, increasing=True)

    def solve_weighted(w):
        # Linearised system: w * (f * d(t) - n(t)) = 0 with d0 = 1.
        lhs = np.hstack([-vand, f[:, None] * vand[:, 1:]])
        rhs = -f
        sol, *_ = np.linalg.lstsq(w[:, None] * lhs, w * rhs, rcond=None)
        num_t = sol[: degree + 1]
        den_t = np.concatenate([[1.0], sol[degree + 1 :]])
        return num_t, den_t

    best = None
    weights = 1.0 / np.maximum(f, 1e-300)
    for _ in range(60):
        num_t, den_t = solve_weighted(weights)
        den_vals = vand @ den_t
        num_vals = vand @ num_t
        if np.any(den_vals <= 0.0) or np.any(num_vals <= 0.0):
            # A sign change invalidates the iterate; soften the weights
            # and retry rather than aborting the whole fit.
            weights = np.sqrt(weights / weights.max())
            continue
        rel = np.abs(num_vals / den_vals - f) / f
        sup_rel = rel.max()
        if best is None or sup_rel < best[0]:
            best = (sup_rel, num_t, den_t)
        weights = weights * (rel / sup_rel + 1e-3)
        weights = weights / weights.max()
    if best is None:
        raise NumericalError(
            f"rational fit of x^{power} on [{lo:g}, {hi:g}] found no "
            f"positive iterate at degree {degree}"
        )

    _, num_t, den_t = best
    scale = hi ** -np.arange(degree + 1)
    num_x = num_t * scale
    den_x = den_t * scale

    check = np.geomspace(lo, hi, 10000)
    num_vals = np.polyval(num_x[::-1], check)
    den_vals = np.polyval(den_x[::-1], check)
    if np.any(num_vals <= 0.0) or np.any(den_vals <= 0.0):
        raise NumericalError(
            "fitted rational function changes sign inside the interval"
        )
    sup_error = float(np.abs(num_vals / den_vals - check**power).max())
    return RationalApprox(
        power=float(power),
        interval=(lo, hi),
        degree=degree,
        num=num_x,
        den=den_x,
        sup_error=sup_error,
    )


def _spectrum_interval(operator, kappa_sq):
    """Bracket the spectrum of the scaled operator.

    The lower end is exact: L = diag(kappa^2) + C^{-1/2} G C^{-1/2} and
    the second term is positive semidefinite, so min(kappa^2) bounds the
    smallest eigenvalue from below.  The upper end comes from power
    iteration with a 5 percent margin.
    """
    lo = float(np.min(kappa_sq))
    n = operator.shape[0]
    v = 1.0 + np.linspace(0.0, 1.0, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(30):
        w = operator @ v
        lam = float(v @ w)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            raise NumericalError("power iteration collapsed to zero")
        v = w / norm
    hi = 1.05 * max(lam, np.linalg.norm(operator @ v))
    if not hi > lo:
        raise NumericalError(
            f"spectrum bracket failed: lo={lo:g} is not below hi={hi:g}"
        )
    return lo, hi


@dataclass(frozen=True)
class FractionalOperator:
    """Sampler and covariance oracle for a fractional-order field."""

    model: FieldModel
    approx: RationalApprox
    integer_order: int
    p_matrix: sp.csr_matrix
    q_x: SparseSymMatrix
    factor: CholeskyFactor

    @property
    def n_vertices(self):
        return self.model.mesh.n_vertices

    def sample(self, seed, stream=0):
        x = sample_gmrf(self.factor, seed, stream=stream)
        return self.p_matrix @ x

    def covariance_columns(self, indices):
        """Columns of cov(u) = P Q_x^{-1} P^T for the given vertices."""
        idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
        rhs = np.asarray(self.p_matrix[idx, :].todense()).T
        cols = self.p_matrix @ self.factor.solve(rhs)
        return cols


def build_fractional(model, fem=None, degree=4):
    """Assemble the rational approximation of a fractional-order field.

    Integer ``model.alpha`` is accepted and reproduces the exact
    integer-order covariance (the rational part degenerates to 1), which
    keeps a single code path for callers that sweep alpha.
    """
    if fem is None:
        fem = assemble_fem(model.mesh)
    elif fem.mesh is not model.mesh:
        raise ValueError("fem matrices were assembled on a different mesh")
    if model.anisotropy is not None:
        raise ValueError(
            "fractional orders with anisotropy are not supported; the "
            "spectrum bracket assumes the isotropic operator"
        )

    n = model.mesh.n_vertices
    kappa = _per_vertex(model.kappa, n, "kappa")
    tau = _per_vertex(model.tau, n, "tau")
    c_lumped = fem.c_lumped
    inv_sqrt_c = 1.0 / np.sqrt(c_lumped)

    kmat = sp.diags(kappa**2 * c_lumped) + fem.g
    operator = (sp.diags(inv_sqrt_c) @ kmat @ sp.diags(inv_sqrt_c)).tocsr()
    operator = (operator + operator.T) * 0.5

    k_int = int(np.floor(model.alpha + _FRACTION_TOL))
    frac = model.alpha - k_int
    interval = _spectrum_interval(operator, kappa**2)

    if frac < _FRACTION_TOL:
        approx = RationalApprox(
            power=0.0,
            interval=interval,
            degree=0,
            num=np.array([1.0]),
            den=np.array([1.0]),
            sup_error=0.0,
        )
        den_mat = sp.identity(n, format="csr")
        num_mat = sp.identity(n, format="csr")
    else:
        approx = rational_fit(frac / 2.0, interval, degree)
        den_mat = _eval_poly_matrix(approx.den, operator)
        num_mat = _eval_poly_matrix(approx.num, operator)

    p_matrix = (sp.diags(1.0 / tau) @ sp.diags(inv_sqrt_c) @ den_mat).tocsr()

    core = sp.identity(n, format="csr")
    for _ in range(k_int):
        core = core @ operator
    q_x_raw = num_mat @ core @ num_mat
    q_x_raw = (q_x_raw + q_x_raw.T) * 0.5
    q_x = SparseSymMatrix.from_matrix(q_x_raw)
    factor = factorize(q_x)
    return FractionalOperator(
        model=model,
        approx=approx,
        integer_order=k_int,
        p_matrix=p_matrix,
        q_x=q_x,
        factor=factor,
    )
