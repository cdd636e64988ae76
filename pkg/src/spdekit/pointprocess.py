"""Log-Gaussian Cox process likelihood, fitting and simulation.

The log-intensity is a piecewise linear field on the mesh, so the
likelihood of an observed pattern splits into an integral term handled
by the vertex quadrature weights and a sum of basis evaluations at the
observed points:

    l(eta) = -sum_j w_j exp(eta_j) + sum_i (A eta)_i

Fitting maximises l plus a Gaussian field prior by Newton iteration;
the Hessian of the integral term is diagonal, so every Newton system
has the sparsity of the prior precision plus the diagonal and reuses
the cached symbolic factorisation.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_fem
from .errors import NumericalError
from .mesh import Mesh, evaluate_basis, vertex_weights
from .precision import build_precision
from .sparse import CholeskyFactor, SparseSymMatrix, factorize
from ._rng import rng_for

_ETA_CLAMP = 700.0


def _clamped_exp(eta):
    return np.exp(np.clip(eta, -_ETA_CLAMP, _ETA_CLAMP))


@dataclass(frozen=True)
class PointPattern:
    """Observed locations tied to the mesh they were observed on."""

    points: np.ndarray
    mesh: Mesh

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            pts = pts.reshape(-1, self.mesh.vertices.shape[1])
        if pts.shape[1] != self.mesh.vertices.shape[1]:
            raise ValueError(
                f"points have dimension {pts.shape[1]}, mesh vertices have "
                f"{self.mesh.vertices.shape[1]}"
            )
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        object.__setattr__(self, "points", pts)

    @cached_property
    def basis(self):
        proj = evaluate_basis(self.mesh, self.points)
        if proj.exterior.any():
            bad = np.flatnonzero(proj.exterior)
            raise ValueError(
                f"{bad.size} point(s) fall outside the mesh, first "
                f"indices {bad[:5].tolist()}"
            )
        return proj.matrix

    @cached_property
    def counts(self):
        """Basis-weighted point counts A^T 1, the data-term gradient."""
        return np.asarray(self.basis.sum(axis=0)).ravel()

    @property
    def n_points(self):
        return self.points.shape[0]


def integrated_intensity(eta, mesh):
    """Vertex-weight quadrature of the intensity integral."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (mesh.n_vertices,):
        raise ValueError(
            f"eta must have one value per vertex ({mesh.n_vertices}), "
            f"got shape {eta.shape}"
        )
    return float(vertex_weights(mesh) @ _clamped_exp(eta))


def lgcp_loglik(eta, pattern):
    eta = np.asarray(eta, dtype=np.float64)
    data_term = float(pattern.counts @ eta)
    return data_term - integrated_intensity(eta, pattern.mesh)


def lgcp_loglik_grad(eta, pattern):
    eta = np.asarray(eta, dtype=np.float64)
    w = vertex_weights(pattern.mesh)
    return pattern.counts - w * _clamped_exp(eta)


def lgcp_loglik_hess_diag(eta, pattern):
    """Diagonal of the likelihood Hessian (the data term is linear)."""
    eta = np.asarray(eta, dtype=np.float64)
    w = vertex_weights(pattern.mesh)
    return -w * _clamped_exp(eta)


@dataclass(frozen=True)
class LgcpFit:
    """Posterior mode and its Laplace precision."""

    mode: np.ndarray
    precision: SparseSymMatrix
    factor: CholeskyFactor
    objective: float
    iterations: int
    grad_norm: float


def lgcp_fit_eta(model, pattern, mu=None, fem=None, max_iter=100,
                 grad_tol=1e-8):
    """Newton ascent for the posterior mode of the log-intensity.

    ``model`` supplies the Gaussian prior on eta; ``mu`` is the prior
    mean (default zero).  The iteration starts from the homogeneous
    maximum likelihood constant, damps by step halving whenever the
    penalised likelihood fails to increase, and stops once the gradient
    drops below ``grad_tol`` in the max norm.
    """
    if pattern.mesh is not model.mesh:
        raise ValueError("pattern and model live on different meshes")
    if fem is None:
        fem = assemble_fem(model.mesh)
    q_prior = build_precision(model, fem)
    q_full = q_prior.full()
    n = model.mesh.n_vertices
    if mu is None:
        mu = np.zeros(n)
    else:
        mu = np.broadcast_to(np.asarray(mu, dtype=np.float64), (n,)).copy()
    w = vertex_weights(model.mesh)

    def objective(eta):
        diff = eta - mu
        return lgcp_loglik(eta, pattern) - 0.5 * (diff @ (q_full @ diff))

    if pattern.n_points == 0:
        eta = mu.copy()
    else:
        eta = np.full(n, np.log(pattern.n_points / w.sum()))
    f_val = objective(eta)
    factor = None
    for iteration in range(1, max_iter + 1):
        lam = w * _clamped_exp(eta)
        grad = pattern.counts - lam - q_full @ (eta - mu)
        grad_norm = float(np.abs(grad).max())
        hess = SparseSymMatrix.from_matrix(q_full + sp.diags(lam))
        factor = factorize(hess)
        if grad_norm < grad_tol:
            return LgcpFit(
                mode=eta,
                precision=hess,
                factor=factor,
                objective=f_val,
                iterations=iteration - 1,
                grad_norm=grad_norm,
            )
        step = factor.solve(grad)
        scale = 1.0
        for _ in range(40):
            trial = eta + scale * step
            f_trial = objective(trial)
            if f_trial > f_val - 1e-14 * abs(f_val):
                break
            scale *= 0.5
        else:
            raise NumericalError(
                "step halving failed to improve the penalised likelihood"
            )
        eta, f_val = trial, f_trial
    raise NumericalError(
        f"posterior mode search did not converge in {max_iter} iterations "
        f"(last gradient norm {grad_norm:.3e})"
    )


def simulate_lgcp(eta, mesh, seed):
    """Draw a point pattern with piecewise linear log-intensity ``eta``.

    Per-triangle thinning: propose from a homogeneous process at the
    triangle's maximum intensity, accept with the interpolated ratio.
    Triangles are visited in index order with a single generator, so a
    fixed seed reproduces the pattern exactly.
    """
    if mesh.kind != "planar":
        raise ValueError(f"simulation supports planar meshes, got {mesh.kind}")
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape != (mesh.n_vertices,):
        raise ValueError(
            f"eta must have one value per vertex ({mesh.n_vertices}), "
            f"got shape {eta.shape}"
        )
    rng = rng_for(seed)
    areas = mesh.measures()
    accepted = []
    for t in range(mesh.n_simplices):
        idx = mesh.simplices[t]
        eta_v = eta[idx]
        log_max = min(eta_v.max(), _ETA_CLAMP)
        n_prop = rng.poisson(np.exp(log_max) * areas[t])
        if n_prop == 0:
            continue
        u1 = rng.uniform(size=n_prop)
        u2 = rng.uniform(size=n_prop)
        s = np.sqrt(u1)
        bary = np.column_stack([1.0 - s, s * (1.0 - u2), s * u2])
        eta_interp = bary @ eta_v
        keep = rng.uniform(size=n_prop) < np.exp(
            np.minimum(eta_interp, _ETA_CLAMP) - log_max
        )
        if keep.any():
            accepted.append(bary[keep] @ mesh.vertices[idx])
    if accepted:
        points = np.vstack(accepted)
    else:
        points = np.empty((0, 2))
    return PointPattern(points=points, mesh=mesh)
