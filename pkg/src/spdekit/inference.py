"""Exact Gaussian conditioning, prediction, and hyperparameter estimation.

Observations are linear in the latent field with independent Gaussian
noise, so the posterior precision is the prior precision plus a low-rank
sparse term and everything downstream is sparse Cholesky work: means by
solves, marginal variances by selected inversion, the hyperparameter
log-posterior by the standard three-density identity evaluated at any
point (the posterior mean by default).
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize
import scipy.sparse as sp

from .errors import NumericalError
from .mesh import Mesh, ProjectionMatrix, evaluate_basis
from .sparse import CholeskyFactor, SparseSymMatrix, factorize, selected_inverse

_LOG2PI = float(np.log(2.0 * np.pi))


@dataclass
class Observations:
    """Point observations y_i = u(s_i) + e_i, e_i ~ N(0, 1/noise_precision).

    ``noise_precision`` is a scalar or a per-observation vector.
    """

    locations: np.ndarray
    values: np.ndarray
    noise_precision: np.ndarray

    def __post_init__(self):
        self.locations = np.atleast_1d(np.asarray(self.locations, dtype=np.float64))
        self.values = np.asarray(self.values, dtype=np.float64)
        prec = np.asarray(self.noise_precision, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("values must be a vector")
        if len(self.locations) != len(self.values):
            raise ValueError(
                f"{len(self.locations)} locations but {len(self.values)} values"
            )
        self.noise_precision = np.broadcast_to(prec, self.values.shape).copy()
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observed values must be finite")
        if np.any(self.noise_precision <= 0) or not np.all(
            np.isfinite(self.noise_precision)
        ):
            raise ValueError("noise precisions must be positive and finite")

    def __len__(self):
        return len(self.values)


@dataclass
class Posterior:
    """Gaussian posterior of the latent field given observations."""

    q_post: SparseSymMatrix
    mu_post: np.ndarray
    factor: CholeskyFactor
    mu_prior: np.ndarray
    mesh: Mesh | None = None


def _design_matrix(a):
    """Accept a ProjectionMatrix (rejecting exterior rows) or a plain matrix."""
    mesh = None
    if isinstance(a, ProjectionMatrix):
        if np.any(a.exterior):
            outside = np.flatnonzero(a.exterior)
            raise ValueError(
                f"{outside.size} observation locations fall outside the mesh "
                f"(rows {outside[:10].tolist()}{'...' if outside.size > 10 else ''})"
            )
        mesh = a.mesh
        a = a.matrix
    return sp.csr_matrix(a), mesh


def condition(q_u, mu_u, a, obs, ordering="amd"):
    """Posterior of u given y = A u + noise.

    Q_post = Q_u + A^T Q_e A (no fill beyond the structural union) and
    mu_post = mu_u + Q_post^-1 A^T Q_e (y - A mu_u).
    """
    if not isinstance(q_u, SparseSymMatrix):
        q_u = SparseSymMatrix.from_matrix(q_u)
    a, mesh = _design_matrix(a)
    if a.shape != (len(obs), q_u.n):
        raise ValueError(
            f"design matrix has shape {a.shape}, expected ({len(obs)}, {q_u.n})"
        )
    mu_u = np.broadcast_to(np.asarray(mu_u, dtype=np.float64), (q_u.n,))
    prec = obs.noise_precision
    q_post_full = q_u.full() + (a.T @ sp.diags(prec) @ a)
    q_post = SparseSymMatrix.from_matrix(0.5 * (q_post_full + q_post_full.T))
    factor = factorize(q_post, ordering=ordering)
    resid = obs.values - a @ mu_u
    mu_post = mu_u + factor.solve(a.T @ (prec * resid))
    return Posterior(
        q_post=q_post, mu_post=mu_post, factor=factor, mu_prior=np.array(mu_u),
        mesh=mesh,
    )


def posterior_marginals(post):
    """Posterior mean and marginal standard deviations at every vertex."""
    z = selected_inverse(post.factor)
    return post.mu_post, np.sqrt(np.clip(z.diagonal(), 0.0, None))


def predict(post, points):
    """Posterior mean and sd of the field interpolated at new points.

    Variances are exact: the needed columns of Q_post^-1 (at most the
    union of basis vertices across points) are obtained by solves.
    """
    if post.mesh is None:
        raise ValueError("posterior carries no mesh; condition on a ProjectionMatrix")
    a = evaluate_basis(post.mesh, points)
    if np.any(a.exterior):
        outside = np.flatnonzero(a.exterior)
        raise ValueError(
            f"{outside.size} prediction points fall outside the mesh "
            f"(rows {outside[:10].tolist()}{'...' if outside.size > 10 else ''})"
        )
    mat = a.matrix
    mean = mat @ post.mu_post
    cols = np.unique(mat.indices)
    rhs = np.zeros((post.q_post.n, cols.size))
    rhs[cols, np.arange(cols.size)] = 1.0
    inv_cols = post.factor.solve(rhs)
    pos = {int(c): k for k, c in enumerate(cols)}
    var = np.empty(mat.shape[0])
    for i in range(mat.shape[0]):
        sl = slice(mat.indptr[i], mat.indptr[i + 1])
        idx = mat.indices[sl]
        w = mat.data[sl]
        block = inv_cols[np.ix_(idx, [pos[int(c)] for c in idx])]
        var[i] = w @ block @ w
    return mean, np.sqrt(np.clip(var, 0.0, None))


@dataclass
class HyperParams:
    """Log-scale hyperparameters: field kappa and tau, observation tau_e.

    ``noise_precision`` is exp(2 log_tau_e).  Builders are free to ignore
    components that their model does not use.
    """

    log_kappa: float = 0.0
    log_tau: float = 0.0
    log_tau_e: float = 0.0

    FIELDS = ("log_kappa", "log_tau", "log_tau_e")

    def to_vector(self, free=FIELDS):
        return np.array([getattr(self, f) for f in free], dtype=float)

    def with_vector(self, vec, free=FIELDS):
        if len(vec) != len(free):
            raise ValueError(f"expected {len(free)} entries, got {len(vec)}")
        return replace(self, **{f: float(v) for f, v in zip(free, vec)})

    @property
    def noise_precision(self):
        return float(np.exp(2.0 * self.log_tau_e))


def log_posterior_theta(model_builder, a, obs, theta, prior=None, eval_at=None):
    """Log posterior density of hyperparameters, up to no constant at all.

    Computes log pi(theta) + log pi(u) + log pi(y | u) - log pi(u | y) at
    u = eval_at (the posterior mean when omitted).  For the Gaussian model
    the identity is exact and u-independent, and the value equals
    log prior plus the exact marginal log-likelihood of y, Gaussian
    normalising constants included.

    ``model_builder(theta)`` returns (Q_u, mu_u); the observation noise is
    exp(2 theta.log_tau_e) per observation.  A failed factorisation warns
    and returns -inf so optimisers can step around it.
    """
    q_u, mu_u = model_builder(theta)
    if not isinstance(q_u, SparseSymMatrix):
        q_u = SparseSymMatrix.from_matrix(q_u)
    mu_u = np.broadcast_to(np.asarray(mu_u, dtype=np.float64), (q_u.n,))
    obs = replace(obs, noise_precision=theta.noise_precision)
    try:
        factor_u = factorize(q_u)
        post = condition(q_u, mu_u, a, obs)
    except NumericalError as exc:
        warnings.warn(f"factorisation failed at theta={theta}: {exc}", stacklevel=2)
        return -np.inf

    u = post.mu_post if eval_at is None else np.asarray(eval_at, dtype=np.float64)
    a_mat, _ = _design_matrix(a)
    prec = obs.noise_precision

    du = u - mu_u
    log_prior_u = 0.5 * factor_u.logdet - 0.5 * du @ (q_u.full() @ du)
    r = obs.values - a_mat @ u
    log_lik = 0.5 * float(np.sum(np.log(prec))) - 0.5 * r @ (prec * r)
    dpost = u - post.mu_post
    log_post_u = 0.5 * post.factor.logdet - 0.5 * dpost @ (post.q_post.full() @ dpost)

    out = (
        log_prior_u
        + log_lik
        - log_post_u
        - 0.5 * len(obs) * _LOG2PI
    )
    if prior is not None:
        out += prior(theta)
    return float(out)


def fit_theta(
    model_builder,
    a,
    obs,
    init,
    prior=None,
    free=HyperParams.FIELDS,
    max_iter=500,
    xatol=1e-6,
):
    """Maximise the hyperparameter log posterior with Nelder-Mead.

    Derivative-free on the log-scale parameters in ``free``; stops when
    the simplex has collapsed below ``xatol`` or after ``max_iter``
    iterations.  Returns (theta_hat, best value, trace), the trace being
    every (vector, value) pair evaluated, in order.
    """
    trace = []

    def negated(vec):
        theta = init.with_vector(vec, free)
        val = log_posterior_theta(model_builder, a, obs, theta, prior)
        trace.append((vec.copy(), val))
        return -val

    res = scipy.optimize.minimize(
        negated,
        init.to_vector(free),
        method="Nelder-Mead",
        options={
            "maxiter": max_iter,
            "xatol": xatol,
            "fatol": 1e-9,
            "initial_simplex": None,
        },
    )
    theta_hat = init.with_vector(res.x, free)
    return theta_hat, -float(res.fun), trace
