"""Closed-form and brute-force references used by the validation tests.

Everything in this module is independent of the finite element pipeline:
covariances come from special functions and series, posterior quantities
from dense linear algebra.  These routines are the "second route" the
sparse code is checked against, so they favour clarity over speed and
refuse problem sizes where dense arithmetic stops being trustworthy.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn
from scipy.special import kv


@dataclass(frozen=True)
class MaternParams:
    """Covariance parameters: inverse range kappa, smoothness nu, variance sigma2."""

    kappa: float
    nu: float
    sigma2: float = 1.0

    @classmethod
    def from_spde(cls, kappa, tau, alpha, d):
        """Parameters implied by operator order alpha and noise scale tau in d dimensions."""
        nu = alpha - d / 2.0
        return cls(kappa=kappa, nu=nu, sigma2=matern_sigma2(kappa, tau, alpha, d))

    @property
    def practical_range(self):
        """Distance where the correlation has dropped to about 0.13."""
        return np.sqrt(8.0 * self.nu) / self.kappa


def matern_cov(r, params):
    """Matern covariance at distance(s) ``r``.

    sigma2 * (kappa r)^nu K_nu(kappa r) / (Gamma(nu) 2^(nu-1)), with the
    r = 0 limit filled in exactly.
    """
    if params.nu <= 0:
        raise ValueError(f"smoothness must be positive, got nu={params.nu}")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    kr = params.kappa * r
    out = np.full_like(r, params.sigma2, dtype=float)
    pos = kr > 0
    scale = params.sigma2 / (gamma_fn(params.nu) * 2.0 ** (params.nu - 1.0))
    out[pos] = scale * kr[pos] ** params.nu * kv(params.nu, kr[pos])
    return out if out.ndim else float(out)


def matern_sigma2(kappa, tau, alpha, d):
    """Marginal variance of the stationary field on R^d.

    Gamma(nu) / (Gamma(alpha) (4 pi)^(d/2) kappa^(2 nu) tau^2) with
    nu = alpha - d/2; only defined when that exponent is positive.
    """
    nu = alpha - d / 2.0
    if nu <= 0:
        raise ValueError(f"alpha must exceed d/2, got alpha={alpha}, d={d}")
    return gamma_fn(nu) / (
        gamma_fn(alpha) * (4.0 * np.pi) ** (d / 2.0) * kappa ** (2.0 * nu) * tau**2
    )


def spectral_density_rd(k, kappa, tau, alpha, d):
    """Power spectral density on R^d at wavenumber magnitude(s) ``k``."""
    k = np.asarray(k, dtype=float)
    out = 1.0 / (tau**2 * (2.0 * np.pi) ** d * (kappa**2 + k**2) ** alpha)
    return out if out.ndim else float(out)


def legendre_values(x, k_max):
    """Legendre polynomials P_0..P_k_max at ``x`` via the three-term recurrence.

    Returns an array of shape (k_max + 1,) + shape(x).  The recurrence
    (k+1) P_{k+1} = (2k+1) x P_k - k P_{k-1} is numerically stable on
    [-1, 1] at any order, unlike expanded-coefficient evaluation which
    loses all accuracy above order forty or so.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ValueError("Legendre evaluation expects arguments in [-1, 1]")
    p = np.zeros((k_max + 1,) + x.shape)
    p[0] = 1.0
    if k_max >= 1:
        p[1] = x
    for k in range(1, k_max):
        p[k + 1] = ((2 * k + 1) * x * p[k] - k * p[k - 1]) / (k + 1)
    return p


def sphere_spectrum(k, kappa, tau, alpha):
    """Angular power S(k) = (4 pi)^-1 tau^-2 (kappa^2 + k(k+1))^-alpha."""
    k = np.asarray(k, dtype=float)
    out = (kappa**2 + k * (k + 1)) ** (-float(alpha)) / (4.0 * np.pi * tau**2)
    return out if out.ndim else float(out)


def sphere_cov_series(angle, kappa, tau, alpha, k_max=200):
    """Covariance on the unit sphere at great-circle angle(s), truncated at k_max.

    Sums (2k+1) S(k) P_k(cos angle) for k = 0..k_max.  The series
    converges absolutely only for alpha > 1, and the discarded tail is
    bounded by :func:`sphere_series_tail_bound`.
    """
    if alpha <= 1:
        raise ValueError("series converges only for alpha > 1")
    angle = np.asarray(angle, dtype=float)
    ks = np.arange(k_max + 1)
    weights = (2 * ks + 1) * sphere_spectrum(ks, kappa, tau, alpha)
    p = legendre_values(np.cos(angle), k_max)
    out = np.tensordot(weights, p, axes=(0, 0))
    return out if out.ndim else float(out)


def sphere_series_tail_bound(kappa, tau, alpha, k_max):
    """Upper bound on the weight discarded beyond k_max.

    Because |P_k| <= 1, the tail is at most sum_{k>k_max} (2k+1) S(k),
    which an integral comparison bounds by
    (kappa^2 + k_max (k_max+1))^(1-alpha) / ((alpha-1) 4 pi tau^2).
    The comparison needs the terms to be decreasing past k_max, which
    fails below roughly kappa sqrt(2/(2 alpha - 1)).
    """
    if alpha <= 1:
        raise ValueError("series converges only for alpha > 1")
    term = lambda k: (2 * k + 1) * sphere_spectrum(k, kappa, tau, alpha)
    if term(k_max + 1) > term(k_max):
        raise ValueError("k_max sits before the peak of the term sequence")
    return (kappa**2 + k_max * (k_max + 1.0)) ** (1.0 - alpha) / (
        (alpha - 1.0) * 4.0 * np.pi * tau**2
    )


def folded_matern_1d(s, t, params, length, terms=10):
    """Covariance on [0, L] with reflecting (Neumann) boundaries, by images.

    Folds the stationary Matern covariance through reflections at 0 and L:
    sum over k of rho(|s - t + 2kL|) + rho(|s + t + 2kL|).  Ten image
    terms are far more than enough whenever L is a few ranges wide.
    """
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    total = np.zeros(np.broadcast(s, t).shape)
    for k in range(-terms, terms + 1):
        total += matern_cov(np.abs(s - t + 2 * k * length), params)
        total += matern_cov(np.abs(s + t + 2 * k * length), params)
    return total if total.ndim else float(total)


def dense_reference(q_u, a, obs, mu_u=None, max_n=500):
    """Posterior mean, covariance, and marginal log-likelihood by dense algebra.

    ``obs`` needs ``values`` and ``noise_precision`` attributes (scalar or
    per-observation).  Sizes above ``max_n`` latent variables are refused;
    beyond that, O(n^3) references stop being the trustworthy side.
    """
    q_u = np.asarray(q_u, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = q_u.shape[0]
    if n > max_n:
        raise ValueError(f"dense reference capped at n={max_n}, got {n}")
    y = np.asarray(obs.values, dtype=float)
    prec = np.broadcast_to(np.asarray(obs.noise_precision, dtype=float), y.shape)
    if mu_u is None:
        mu_u = np.zeros(n)

    q_post = q_u + (a.T * prec) @ a
    sigma_post = np.linalg.inv(q_post)
    sigma_post = 0.5 * (sigma_post + sigma_post.T)
    mu_post = mu_u + sigma_post @ (a.T @ (prec * (y - a @ mu_u)))

    # Marginal y ~ N(A mu_u, A Q_u^-1 A^T + Q_e^-1), evaluated the direct way.
    cov_y = a @ np.linalg.solve(q_u, a.T) + np.diag(1.0 / prec)
    resid = y - a @ mu_u
    sign, logdet = np.linalg.slogdet(cov_y)
    if sign <= 0:
        raise np.linalg.LinAlgError("marginal covariance not positive definite")
    loglik = -0.5 * (
        len(y) * np.log(2.0 * np.pi) + logdet + resid @ np.linalg.solve(cov_y, resid)
    )
    return mu_post, sigma_post, float(loglik)
