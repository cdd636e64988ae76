"""Reference-implementation checks.

The oracles are the trusted side of every later comparison, so they get
checked against hand-derivable special cases: half-integer smoothness
has elementary closed forms, the variance formula has exact rational
values at convenient parameters, and the spectral densities must
integrate back to the variance.
"""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import eval_legendre
from scipy.stats import norm

from spdekit.oracles import (MaternParams, dense_reference, folded_matern_1d,
                             legendre_values, matern_cov, matern_sigma2,
                             sphere_cov_series, sphere_series_tail_bound,
                             sphere_spectrum, spectral_density_rd)


class TestMaternClosedForms:
    """nu in {1/2, 3/2, 5/2} reduces to exponentials times polynomials."""

    r = np.concatenate([[0.0], np.geomspace(1e-3, 30.0, 200)])

    def test_half(self):
        p = MaternParams(kappa=1.3, nu=0.5, sigma2=2.0)
        expected = 2.0 * np.exp(-1.3 * self.r)
        np.testing.assert_allclose(matern_cov(self.r, p), expected,
                                   rtol=1e-10, atol=1e-300)

    def test_three_halves(self):
        p = MaternParams(kappa=0.7, nu=1.5)
        kr = 0.7 * self.r
        expected = (1.0 + kr) * np.exp(-kr)
        np.testing.assert_allclose(matern_cov(self.r, p), expected,
                                   rtol=1e-10, atol=1e-300)

    def test_five_halves(self):
        p = MaternParams(kappa=2.0, nu=2.5, sigma2=0.3)
        kr = 2.0 * self.r
        expected = 0.3 * (1.0 + kr + kr**2 / 3.0) * np.exp(-kr)
        np.testing.assert_allclose(matern_cov(self.r, p), expected,
                                   rtol=1e-10, atol=1e-300)

    def test_zero_distance_is_exact_variance(self):
        p = MaternParams(kappa=5.0, nu=1.0, sigma2=3.25)
        assert matern_cov(0.0, p) == 3.25

    def test_monotone_decreasing(self):
        p = MaternParams(kappa=3.0, nu=1.0)
        r = np.linspace(0.0, 5.0, 400)
        c = matern_cov(r, p)
        assert np.all(np.diff(c) < 0.0)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            matern_cov(-0.1, MaternParams(kappa=1.0, nu=1.0))
        with pytest.raises(ValueError):
            matern_cov(1.0, MaternParams(kappa=1.0, nu=0.0))


class TestVarianceFormula:
    def test_frozen_values(self):
        # alpha=2, d=2, kappa=sqrt(8), tau=1 gives 1/(32 pi); the d=1
        # case at kappa=2, tau=1/2 collapses to exactly 1/8.
        np.testing.assert_allclose(
            matern_sigma2(np.sqrt(8.0), 1.0, 2, 2),
            0.009947183943243459, rtol=1e-13,
        )
        np.testing.assert_allclose(
            matern_sigma2(2.0, 0.5, 2, 1), 0.125, rtol=1e-13,
        )

    def test_tau_scaling(self):
        base = matern_sigma2(3.0, 1.0, 2, 2)
        assert np.isclose(matern_sigma2(3.0, 2.0, 2, 2), base / 4.0)

    def test_from_spde_consistency(self):
        p = MaternParams.from_spde(kappa=4.0, tau=0.3, alpha=2, d=2)
        assert p.nu == 1.0
        np.testing.assert_allclose(p.sigma2, matern_sigma2(4.0, 0.3, 2, 2))
        np.testing.assert_allclose(p.practical_range, np.sqrt(8.0) / 4.0)

    def test_rejects_nonpositive_smoothness(self):
        with pytest.raises(ValueError):
            matern_sigma2(1.0, 1.0, 1, 2)


class TestSpectralDensity:
    """The spectral density must integrate back to the variance."""

    def test_integrates_to_variance_1d(self):
        val, _ = quad(
            lambda w: spectral_density_rd(w, 3.0, 0.7, 2, 1),
            -np.inf, np.inf,
        )
        np.testing.assert_allclose(val, matern_sigma2(3.0, 0.7, 2, 1),
                                   rtol=1e-9)

    def test_integrates_to_variance_2d(self):
        val, _ = quad(
            lambda k: 2.0 * np.pi * k * spectral_density_rd(k, 3.0, 0.7, 2, 2),
            0.0, np.inf,
        )
        np.testing.assert_allclose(val, matern_sigma2(3.0, 0.7, 2, 2),
                                   rtol=1e-9)


class TestLegendre:
    def test_low_orders_exact(self):
        x = np.linspace(-1.0, 1.0, 41)
        p = legendre_values(x, 3)
        np.testing.assert_allclose(p[2], (3.0 * x**2 - 1.0) / 2.0, atol=1e-14)
        np.testing.assert_allclose(p[3], (5.0 * x**3 - 3.0 * x) / 2.0,
                                   atol=1e-14)

    def test_matches_scipy_high_order(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1.0, 1.0, size=50)
        p = legendre_values(x, 200)
        for k in (0, 1, 17, 60, 200):
            np.testing.assert_allclose(p[k], eval_legendre(k, x),
                                       rtol=1e-10, atol=1e-12)

    def test_endpoint_values(self):
        p = legendre_values(np.array([1.0, -1.0]), 30)
        np.testing.assert_allclose(p[:, 0], 1.0, atol=1e-13)
        signs = (-1.0) ** np.arange(31)
        np.testing.assert_allclose(p[:, 1], signs, atol=1e-13)

    def test_domain_guard(self):
        with pytest.raises(ValueError):
            legendre_values(1.5, 3)


class TestSphereSeries:
    kappa = np.sqrt(8.0)
    tau = 15.0

    def test_spectrum_frozen_value(self):
        np.testing.assert_allclose(
            sphere_spectrum(0, self.kappa, self.tau, 2),
            5.526213301801922e-06, rtol=1e-13,
        )

    def test_tail_bound_frozen_value(self):
        np.testing.assert_allclose(
            sphere_series_tail_bound(self.kappa, self.tau, 2, 200),
            8.796201037488136e-09, rtol=1e-13,
        )

    def test_tail_bound_dominates_actual_tail(self):
        short = sphere_cov_series(np.array([0.0]), self.kappa, self.tau, 2,
                                  k_max=120)[0]
        long = sphere_cov_series(np.array([0.0]), self.kappa, self.tau, 2,
                                 k_max=400)[0]
        bound = sphere_series_tail_bound(self.kappa, self.tau, 2, 120)
        assert abs(long - short) <= bound

    def test_tail_bound_rejects_pre_peak_cutoff(self):
        # terms still grow at k=0 for this kappa
        with pytest.raises(ValueError):
            sphere_series_tail_bound(20.0, 1.0, 2, 0)

    def test_series_needs_alpha_above_one(self):
        with pytest.raises(ValueError):
            sphere_cov_series(np.array([0.0]), 1.0, 1.0, 1)

    def test_variance_is_weight_sum(self):
        k = np.arange(201)
        weights = (2 * k + 1) * sphere_spectrum(k, self.kappa, self.tau, 2)
        np.testing.assert_allclose(
            sphere_cov_series(np.array([0.0]), self.kappa, self.tau, 2,
                              k_max=200)[0],
            weights.sum(),
            rtol=1e-12,
        )

    def test_variance_frozen_value(self):
        np.testing.assert_allclose(
            sphere_cov_series(np.array([0.0]), self.kappa, self.tau, 2,
                              k_max=200)[0],
            4.614285117582839e-05, rtol=1e-12,
        )


class TestFoldedMatern:
    params = MaternParams(kappa=12.0, nu=1.5)

    def test_symmetric(self):
        s = np.array([0.3, 0.8, 1.1])
        t = np.array([0.5, 0.1, 1.9])
        a = folded_matern_1d(s, t, self.params, 2.0)
        b = folded_matern_1d(t, s, self.params, 2.0)
        np.testing.assert_allclose(a, b, rtol=1e-14)

    def test_interior_matches_plain_matern(self):
        # far from both walls the images are negligible
        c = folded_matern_1d(1.0, 1.2, self.params, 2.0)
        np.testing.assert_allclose(c, matern_cov(0.2, self.params),
                                   rtol=1e-6)

    def test_boundary_variance_doubles(self):
        c = folded_matern_1d(0.0, 0.0, self.params, 2.0)
        np.testing.assert_allclose(c, 2.0 * self.params.sigma2, rtol=1e-8)


class TestDenseReference:
    def test_scalar_closed_form(self):
        class Obs:
            values = np.array([1.3])
            noise_precision = np.array([10.0])

        mu, sigma, loglik = dense_reference(
            np.array([[2.5]]), np.array([[1.0]]), Obs()
        )
        var_y = 1.0 / 2.5 + 0.1
        np.testing.assert_allclose(
            loglik, norm.logpdf(1.3, 0.0, np.sqrt(var_y)), rtol=1e-12
        )
        np.testing.assert_allclose(mu[0], (10.0 * 1.3) / (2.5 + 10.0),
                                   rtol=1e-12)
        np.testing.assert_allclose(sigma[0, 0], 1.0 / 12.5, rtol=1e-12)

    def test_refuses_large_problems(self):
        n = 501

        class Obs:
            values = np.zeros(1)
            noise_precision = np.ones(1)

        with pytest.raises(ValueError):
            dense_reference(np.eye(n), np.zeros((1, n)), Obs())
