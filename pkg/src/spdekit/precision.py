"""Precision matrices of Whittle-Matern fields and separable space-time models.

The continuous model is tau (kappa^2 - div H grad)^(alpha/2) u = white
noise; with a lumped mass matrix every integer power alpha in 1..4 yields
a sparse precision.  kappa and tau may vary over vertices, the diffusion
tensor H over triangles.  Fractional alpha lives in :mod:`.fractional`.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import FemMatrices, assemble_fem
from .mesh import Mesh
from .oracles import matern_sigma2
from .sparse import SparseSymMatrix

SUPPORTED_ALPHA = (1, 2, 3, 4)


def _per_vertex(value, n, name):
    value = np.asarray(value, dtype=np.float64)
    try:
        out = np.broadcast_to(value, (n,)).copy()
    except ValueError:
        raise ValueError(
            f"{name} must be a scalar or a length-{n} vector, "
            f"got shape {value.shape}"
        ) from None
    if not np.all(np.isfinite(out)) or np.any(out <= 0):
        raise ValueError(f"{name} must be positive and finite")
    return out


@dataclass
class FieldModel:
    """A Whittle-Matern field on a mesh.

    ``kappa`` and ``tau`` are stored per vertex (scalars broadcast);
    ``anisotropy`` is an optional per-triangle SPD 2x2 field applied in
    the stiffness assembly.
    """

    mesh: Mesh
    alpha: float
    kappa: np.ndarray
    tau: np.ndarray
    anisotropy: np.ndarray | None = None

    def __post_init__(self):
        n = self.mesh.n_vertices
        self.kappa = _per_vertex(self.kappa, n, "kappa")
        self.tau = _per_vertex(self.tau, n, "tau")
        if self.alpha <= self.mesh.intrinsic_dim / 2.0:
            raise ValueError(
                f"alpha={self.alpha} gives nonpositive smoothness in "
                f"dimension {self.mesh.intrinsic_dim}"
            )

    @property
    def nu(self):
        return self.alpha - self.mesh.intrinsic_dim / 2.0

    @property
    def practical_range(self):
        """Per-vertex distance where correlation drops to about 0.13."""
        return np.sqrt(8.0 * self.nu) / self.kappa

    def stationary_sigma2(self):
        """Marginal variance implied by constant parameters on R^d."""
        if np.ptp(self.kappa) != 0 or np.ptp(self.tau) != 0:
            raise ValueError("marginal variance formula needs constant parameters")
        return matern_sigma2(
            self.kappa[0], self.tau[0], self.alpha, self.mesh.intrinsic_dim
        )

    @classmethod
    def from_range_sigma(cls, mesh, alpha, practical_range, sigma2, anisotropy=None):
        """Parameterise by practical range and marginal variance instead.

        Uses the stationary relations on R^d; on the sphere they are the
        usual large-kappa approximation.
        """
        d = mesh.intrinsic_dim
        nu = alpha - d / 2.0
        if nu <= 0:
            raise ValueError("alpha must exceed d/2")
        kappa = np.sqrt(8.0 * nu) / practical_range
        tau = np.sqrt(matern_sigma2(kappa, 1.0, alpha, d) / sigma2)
        return cls(mesh=mesh, alpha=alpha, kappa=kappa, tau=tau, anisotropy=anisotropy)


def build_precision(model, fem=None):
    """Sparse precision matrix of the discretised field.

    Only integer alpha in {1, 2, 3, 4} here.  The alpha = 1 matrix is
    diag(tau) (diag(kappa^2) C_l + G) diag(tau); every further power
    multiplies by C_l^-1 (diag(kappa^2) C_l + G).
    """
    alpha = model.alpha
    if alpha not in SUPPORTED_ALPHA:
        raise ValueError(
            f"alpha must be one of {SUPPORTED_ALPHA} (fractional orders are "
            f"handled by build_fractional), got {alpha}"
        )
    if fem is None:
        fem = assemble_fem(model.mesh, model.anisotropy)
    elif fem.mesh is not model.mesh:
        raise ValueError("fem was assembled for a different mesh")
    c = fem.c_lumped
    kmat = (sp.diags(model.kappa**2 * c) + fem.g).tocsc()
    core = kmat
    cinv = sp.diags(1.0 / c)
    for _ in range(int(alpha) - 1):
        core = kmat @ cinv @ core
    tau_d = sp.diags(model.tau)
    q = (tau_d @ core @ tau_d).tocsc()
    return SparseSymMatrix.from_matrix(0.5 * (q + q.T))


def make_barrier_kappa(mesh, barrier_triangles, range_normal, range_factor=20.0):
    """Per-vertex kappa implementing a barrier: tiny range inside the mask.

    ``barrier_triangles`` is a boolean mask over simplices.  Vertices all
    of whose incident triangles are masked get kappa multiplied by
    ``range_factor`` (at least 10, or the barrier leaks); every other
    vertex gets the kappa of ``range_normal``.  Intended for alpha = 2 on
    planar meshes.
    """
    mask = np.asarray(barrier_triangles, dtype=bool)
    if mask.shape != (mesh.n_simplices,):
        raise ValueError(
            f"barrier mask must have one entry per simplex "
            f"({mesh.n_simplices}), got shape {mask.shape}"
        )
    if range_factor < 10.0:
        raise ValueError("range_factor below 10 leaves visible leakage; refusing")
    if range_normal <= 0:
        raise ValueError("range_normal must be positive")
    nu = 1.0  # alpha = 2 in two dimensions
    kappa_normal = np.sqrt(8.0 * nu) / range_normal
    touched_by_normal = np.zeros(mesh.n_vertices, dtype=bool)
    normal_tris = mesh.simplices[~mask]
    touched_by_normal[normal_tris.ravel()] = True
    return np.where(touched_by_normal, kappa_normal, kappa_normal * range_factor)


def ar1_precision(phi, t_steps):
    """Tridiagonal precision of a unit-variance stationary AR(1) path.

    The inverse has entries phi^|i-j| exactly.  Needs |phi| < 1 and at
    least two steps.
    """
    if not -1.0 < phi < 1.0:
        raise ValueError(f"AR(1) coefficient must satisfy |phi| < 1, got {phi}")
    if t_steps < 2:
        raise ValueError("need at least two time steps")
    s = 1.0 / (1.0 - phi * phi)
    main = np.full(t_steps, (1.0 + phi * phi) * s)
    main[0] = main[-1] = s
    off = np.full(t_steps - 1, -phi * s)
    q = sp.diags([off, main, off], [-1, 0, 1], format="csc")
    return SparseSymMatrix.from_matrix(q)


@dataclass
class SpaceTimeModel:
    """Separable space-time model: AR(1) in time, Whittle-Matern in space.

    ``phi`` is the lag-one correlation of the time process.  Samples are
    laid out time-major: vertex j at step t is index t * n + j.
    """

    spatial: FieldModel
    t_steps: int
    phi: float

    def __post_init__(self):
        if not -1.0 < self.phi < 1.0:
            raise ValueError("phi must lie in (-1, 1)")
        if self.t_steps < 2:
            raise ValueError("need at least two time steps")

    @classmethod
    def from_damping(cls, spatial, t_steps, dt, damping):
        """Continuous-time parameterisation: phi = exp(-dt * damping)."""
        if dt <= 0 or damping <= 0:
            raise ValueError("dt and damping must be positive")
        return cls(spatial=spatial, t_steps=t_steps, phi=float(np.exp(-dt * damping)))


def build_spacetime_precision(model, fem=None, max_dimension=5_000_000):
    """Kronecker precision Q_time (x) Q_space, time-major ordering."""
    n_total = model.t_steps * model.spatial.mesh.n_vertices
    if n_total > max_dimension:
        raise ValueError(
            f"space-time dimension {n_total} exceeds the cap {max_dimension}"
        )
    q_s = build_precision(model.spatial, fem)
    q_t = ar1_precision(model.phi, model.t_steps)
    q = sp.kron(q_t.full(), q_s.full(), format="csc")
    return SparseSymMatrix.from_matrix(q)
