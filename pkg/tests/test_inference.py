"""Conditioning and hyperparameter estimation against dense references.

The dense route (small problems, explicit inverses) is independent of the
sparse machinery, so agreement here is the main correctness argument for
the posterior code.
"""

import numpy as np
import pytest

from spdekit.inference import (HyperParams, Observations, condition,
                               fit_theta, log_posterior_theta,
                               posterior_marginals, predict)
from spdekit.mesh import evaluate_basis, rectangle_mesh
from spdekit.oracles import dense_reference
from spdekit.precision import FieldModel, build_precision
from spdekit.sparse import SparseSymMatrix


def _setup(seed=0, n_obs=40, noise=25.0):
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 9, 8)
    model = FieldModel(mesh=mesh, alpha=2, kappa=6.0, tau=0.5)
    q = build_precision(model)
    rng = np.random.default_rng(seed)
    locs = rng.uniform(0.05, 0.95, size=(n_obs, 2))
    a = evaluate_basis(mesh, locs)
    values = rng.standard_normal(n_obs)
    obs = Observations(locations=locs, values=values, noise_precision=noise)
    return mesh, q, a, obs


class TestObservations:
    def test_broadcasts_scalar_noise(self):
        obs = Observations(np.zeros((3, 2)), np.zeros(3), 4.0)
        np.testing.assert_array_equal(obs.noise_precision, [4.0, 4.0, 4.0])
        assert len(obs) == 3

    def test_validates_lengths_and_signs(self):
        with pytest.raises(ValueError, match="locations"):
            Observations(np.zeros((2, 2)), np.zeros(3), 1.0)
        with pytest.raises(ValueError, match="positive"):
            Observations(np.zeros((2, 2)), np.zeros(2), -1.0)
        with pytest.raises(ValueError, match="finite"):
            Observations(np.zeros((2, 2)), np.array([1.0, np.nan]), 1.0)


class TestCondition:
    def test_matches_dense_reference(self):
        _, q, a, obs = _setup()
        post = condition(q, 0.0, a, obs)
        mu, sd = posterior_marginals(post)
        mu_ref, sigma_ref, _ = dense_reference(q.toarray(), a.toarray(), obs)
        np.testing.assert_allclose(mu, mu_ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(sd, np.sqrt(np.diag(sigma_ref)),
                                   rtol=1e-9)

    def test_nonzero_prior_mean(self):
        mesh, q, a, obs = _setup(seed=1)
        mu_u = np.sin(mesh.vertices[:, 0] * 3.0)
        post = condition(q, mu_u, a, obs)
        mu_ref, _, _ = dense_reference(q.toarray(), a.toarray(), obs,
                                       mu_u=mu_u)
        np.testing.assert_allclose(post.mu_post, mu_ref, rtol=0, atol=1e-10)

    def test_orderings_agree(self):
        _, q, a, obs = _setup(seed=2)
        mu_amd = condition(q, 0.0, a, obs, ordering="amd").mu_post
        mu_nat = condition(q, 0.0, a, obs, ordering="natural").mu_post
        np.testing.assert_allclose(mu_amd, mu_nat, rtol=0, atol=1e-11)

    def test_rejects_exterior_observations(self):
        mesh, q, _, _ = _setup()
        locs = np.array([[0.5, 0.5], [2.0, 0.5]])
        a = evaluate_basis(mesh, locs)
        obs = Observations(locs, np.zeros(2), 1.0)
        with pytest.raises(ValueError, match="outside the mesh"):
            condition(q, 0.0, a, obs)

    def test_scalar_closed_form(self):
        # one latent, one observation: everything is a scalar formula
        q = SparseSymMatrix.from_matrix(np.array([[2.5]]))
        obs = Observations(np.zeros((1, 1)), np.array([1.3]), 10.0)
        post = condition(q, 0.0, np.array([[1.0]]), obs)
        np.testing.assert_allclose(post.mu_post, [13.0 / 12.5], rtol=1e-14)
        _, sd = posterior_marginals(post)
        np.testing.assert_allclose(sd, [np.sqrt(1.0 / 12.5)], rtol=1e-14)


class TestPredict:
    def test_matches_dense_reference(self):
        mesh, q, a, obs = _setup(seed=3)
        post = condition(q, 0.0, a, obs)
        rng = np.random.default_rng(4)
        pts = rng.uniform(0.1, 0.9, size=(15, 2))
        mean, sd = predict(post, pts)

        _, sigma_ref, _ = dense_reference(q.toarray(), a.toarray(), obs)
        b = evaluate_basis(mesh, pts).toarray()
        mu_ref, _, _ = dense_reference(q.toarray(), a.toarray(), obs)
        np.testing.assert_allclose(mean, b @ mu_ref, rtol=0, atol=1e-10)
        np.testing.assert_allclose(sd, np.sqrt(np.diag(b @ sigma_ref @ b.T)),
                                   rtol=1e-9)

    def test_prediction_at_vertex_matches_marginal(self):
        mesh, q, a, obs = _setup(seed=5)
        post = condition(q, 0.0, a, obs)
        mu, sd = posterior_marginals(post)
        v = 37
        mean_p, sd_p = predict(post, mesh.vertices[[v]])
        np.testing.assert_allclose(mean_p, [mu[v]], rtol=1e-12)
        np.testing.assert_allclose(sd_p, [sd[v]], rtol=1e-9)

    def test_requires_mesh(self):
        q = SparseSymMatrix.from_matrix(np.eye(2))
        obs = Observations(np.zeros((1, 1)), np.array([0.5]), 1.0)
        post = condition(q, 0.0, np.array([[1.0, 0.0]]), obs)
        with pytest.raises(ValueError, match="no mesh"):
            predict(post, np.zeros((1, 2)))

    def test_rejects_exterior_points(self):
        _, q, a, obs = _setup(seed=6)
        post = condition(q, 0.0, a, obs)
        with pytest.raises(ValueError, match="outside the mesh"):
            predict(post, np.array([[1.5, 0.5]]))


class TestHyperParams:
    def test_vector_round_trip(self):
        theta = HyperParams(log_kappa=1.0, log_tau=-0.5, log_tau_e=2.0)
        free = ("log_kappa", "log_tau_e")
        vec = theta.to_vector(free)
        np.testing.assert_array_equal(vec, [1.0, 2.0])
        back = theta.with_vector(vec + 1.0, free)
        assert back.log_kappa == 2.0
        assert back.log_tau == -0.5  # untouched
        assert back.log_tau_e == 3.0

    def test_noise_precision(self):
        theta = HyperParams(log_tau_e=0.5 * np.log(9.0))
        np.testing.assert_allclose(theta.noise_precision, 9.0, rtol=1e-14)

    def test_with_vector_length_check(self):
        with pytest.raises(ValueError, match="entries"):
            HyperParams().with_vector(np.zeros(2), ("log_kappa",))


class TestLogPosteriorTheta:
    def _scalar_pieces(self):
        q = np.array([[2.0]])
        a = np.array([[1.0]])
        obs = Observations(np.zeros((1, 1)), np.array([0.7]), 1.0)
        builder = lambda theta: (q, np.zeros(1))
        return builder, a, obs

    def test_scalar_matches_marginal_likelihood(self):
        from scipy.stats import norm

        builder, a, obs = self._scalar_pieces()
        theta = HyperParams(log_tau_e=0.5 * np.log(4.0))
        val = log_posterior_theta(builder, a, obs, theta)
        np.testing.assert_allclose(
            val, norm.logpdf(0.7, 0.0, np.sqrt(0.5 + 0.25)), rtol=1e-12
        )

    def test_value_independent_of_evaluation_point(self):
        _, q, a, obs = _setup(seed=7, n_obs=25)
        builder = lambda theta: (q, np.zeros(q.n))
        theta = HyperParams(log_tau_e=0.5 * np.log(25.0))
        base = log_posterior_theta(builder, a, obs, theta)
        rng = np.random.default_rng(8)
        for _ in range(3):
            probe = rng.standard_normal(q.n)
            val = log_posterior_theta(builder, a, obs, theta, eval_at=probe)
            np.testing.assert_allclose(val, base, rtol=1e-10)

    def test_prior_term_added(self):
        builder, a, obs = self._scalar_pieces()
        theta = HyperParams(log_kappa=0.3)
        prior = lambda th: -0.5 * th.log_kappa**2
        plain = log_posterior_theta(builder, a, obs, theta)
        with_prior = log_posterior_theta(builder, a, obs, theta, prior=prior)
        np.testing.assert_allclose(with_prior - plain, -0.5 * 0.09,
                                   rtol=1e-12)

    def test_indefinite_model_warns_and_returns_neg_inf(self):
        builder = lambda theta: (np.diag([1.0, -1.0]), np.zeros(2))
        obs = Observations(np.zeros((1, 1)), np.array([0.0]), 1.0)
        with pytest.warns(UserWarning, match="factorisation failed"):
            val = log_posterior_theta(builder, np.array([[1.0, 0.0]]), obs,
                                      HyperParams())
        assert val == -np.inf


class TestFitTheta:
    def test_scalar_noise_precision_recovery(self):
        # max over noise precision of N(y; 0, 1/q + 1/prec) has the
        # closed-form optimum prec = 1 / (y^2 - 1/q) when y^2 > 1/q
        y = 0.9
        q = np.array([[10.0]])
        a = np.array([[1.0]])
        obs = Observations(np.zeros((1, 1)), np.array([y]), 1.0)
        builder = lambda theta: (q, np.zeros(1))
        theta_hat, best, trace = fit_theta(
            builder, a, obs, HyperParams(), free=("log_tau_e",), xatol=1e-8
        )
        target = 1.0 / (y**2 - 0.1)
        np.testing.assert_allclose(theta_hat.noise_precision, target,
                                   rtol=1e-4)
        assert len(trace) > 5
        assert best >= max(v for _, v in trace) - 1e-12

    def test_free_subset_leaves_others_fixed(self):
        _, q, a, obs = _setup(seed=9, n_obs=30)
        builder = lambda theta: (q, np.zeros(q.n))
        init = HyperParams(log_kappa=1.7, log_tau=-0.4, log_tau_e=1.0)
        theta_hat, _, trace = fit_theta(builder, a, obs, init,
                                        free=("log_tau_e",), max_iter=40)
        assert theta_hat.log_kappa == init.log_kappa
        assert theta_hat.log_tau == init.log_tau
        assert all(len(vec) == 1 for vec, _ in trace)

    def test_iteration_budget_respected(self):
        builder, a, obs = TestLogPosteriorTheta()._scalar_pieces()
        _, _, trace = fit_theta(builder, a, obs, HyperParams(),
                                free=("log_tau_e",), max_iter=5)
        assert len(trace) <= 15  # a few evaluations per iteration
