"""Non-Gaussian fields driven by normal variance-mean mixture noise.

The driving noise of the alpha = 2 field is replaced by a type-G
mixture: per-cell noise gamma*h + mu*(V - h) + sigma*sqrt(V)*Z with Z
standard normal and V a positive mixing vector whose mean is the cell
measure h.  Solving the discretised operator against that noise gives

    u = diag(1/tau) K^{-1} (gamma*h + mu*(V - h) + sigma*sqrt(V)*Z)

with K = diag(kappa^2 h) + G.  Conditionally on V the field is
Gaussian, so kriging and likelihood machinery applies unchanged given
V; marginally it has heavier tails and, with mu != 0, skew.  As the
mixing concentrates (V -> h) the construction collapses to the usual
Gaussian field, which is the main correctness handle used by the tests.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import assemble_fem
from .precision import FieldModel, _per_vertex
from .sparse import CholeskyFactor, SparseSymMatrix, factorize
from ._rng import rng_for

MIXING_FAMILIES = ("nig", "gal")


@dataclass(frozen=True)
class TypeGNoise:
    """Mixture parameters: family plus (gamma, mu, sigma, shape).

    ``shape`` controls how concentrated the mixing is around its mean;
    both families keep E[V_j] = h_j for every shape, and V_j -> h_j in
    probability as shape grows, so large shape recovers the Gaussian
    field.  Small shape gives heavy tails (and skew when mu != 0).
    """

    family: str
    gamma: float = 0.0
    mu: float = 0.0
    sigma: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in MIXING_FAMILIES:
            raise ValueError(
                f"family must be one of {MIXING_FAMILIES}, got {self.family!r}"
            )
        for name in ("gamma", "mu", "sigma", "shape"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.shape <= 0.0:
            raise ValueError("shape must be positive")


def sample_mixing(noise, h, rng):
    """Draw the mixing vector V with E[V] = h.

    nig: inverse Gaussian with mean h_j and shape parameter shape*h_j^2,
    so var(V_j) = h_j / shape.  gal: gamma with shape*h_j shape and rate
    shape, same mean and variance.  Both families are closed under the
    limit shape -> inf where V degenerates to h.
    """
    h = np.asarray(h, dtype=np.float64)
    if noise.family == "nig":
        return rng.wald(h, noise.shape * h**2)
    return rng.gamma(noise.shape * h, 1.0 / noise.shape)


@dataclass(frozen=True)
class TypeGField:
    """Factorised operator plus noise model, ready for repeated draws."""

    model: FieldModel
    noise: TypeGNoise
    h: np.ndarray
    tau: np.ndarray
    k_factor: CholeskyFactor

    @property
    def n_vertices(self):
        return self.model.mesh.n_vertices


def build_type_g(model, noise, fem=None):
    """Prepare a type-G field for ``model`` (alpha = 2 only).

    The conditional representation hinges on the precision being an
    exact square tau^2 K C^{-1} K, which holds only for alpha = 2.
    """
    if model.alpha != 2:
        raise ValueError(
            f"type-G fields require alpha = 2, got alpha = {model.alpha}"
        )
    if model.anisotropy is not None:
        raise ValueError("type-G fields do not support anisotropy")
    if fem is None:
        fem = assemble_fem(model.mesh)
    elif fem.mesh is not model.mesh:
        raise ValueError("fem matrices were assembled on a different mesh")
    n = model.mesh.n_vertices
    kappa = _per_vertex(model.kappa, n, "kappa")
    tau = _per_vertex(model.tau, n, "tau")
    h = fem.c_lumped
    kmat = sp.diags(kappa**2 * h) + fem.g
    k_factor = factorize(SparseSymMatrix.from_matrix(kmat))
    return TypeGField(model=model, noise=noise, h=h, tau=tau, k_factor=k_factor)


def _solve_noise(field, w):
    return field.k_factor.solve(w) / field.tau


def sample_type_g(field, seed, index=0):
    """One field draw; ``index`` selects an independent replicate.

    Streams 2*index (mixing) and 2*index + 1 (normals) keep replicate
    fan-out reproducible regardless of draw order.
    """
    v = sample_mixing(field.noise, field.h, rng_for(seed, 2 * index))
    z = rng_for(seed, 2 * index + 1).standard_normal(field.n_vertices)
    return type_g_from_mixing(field, v, z)


def sample_type_g_given_v(field, v, seed, stream=0):
    """Conditional draw with the mixing vector held fixed."""
    z = rng_for(seed, stream).standard_normal(field.n_vertices)
    return type_g_from_mixing(field, np.asarray(v, dtype=np.float64), z)


def type_g_from_mixing(field, v, z):
    """Deterministic map (V, Z) -> u; exposed for conditional tests."""
    noise = field.noise
    w = noise.gamma * field.h + noise.mu * (v - field.h)
    w = w + noise.sigma * np.sqrt(v) * z
    return _solve_noise(field, w)


def conditional_mean(field, v):
    """E[u | V = v], the location part of the conditional Gaussian."""
    noise = field.noise
    w = noise.gamma * field.h + noise.mu * (np.asarray(v, np.float64) - field.h)
    return _solve_noise(field, w)
