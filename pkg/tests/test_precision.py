"""Precision matrix construction: operator powers against dense formulas,
AR(1) closed-form inverse, Kronecker space-time structure, and the barrier
parameterisation.
"""

import numpy as np
import pytest
import scipy.sparse as sp

from spdekit.assembly import assemble_fem
from spdekit.mesh import interval_mesh, rectangle_mesh
from spdekit.precision import (FieldModel, SpaceTimeModel, ar1_precision,
                               build_precision, build_spacetime_precision,
                               make_barrier_kappa)
from spdekit.sparse import factorize


def _dense_power(model, fem, alpha):
    c = fem.c_lumped
    k = np.diag(model.kappa**2 * c) + fem.g.toarray()
    core = k.copy()
    for _ in range(alpha - 1):
        core = k @ np.diag(1.0 / c) @ core
    return np.diag(model.tau) @ core @ np.diag(model.tau)


class TestOperatorPowers:
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 5)

    @pytest.mark.parametrize("alpha", [2, 3, 4])
    def test_matches_dense_formula(self, alpha):
        model = FieldModel(mesh=self.mesh, alpha=alpha, kappa=4.0, tau=0.7)
        fem = assemble_fem(self.mesh)
        q = build_precision(model, fem)
        expected = _dense_power(model, fem, alpha)
        np.testing.assert_allclose(q.toarray(), expected, rtol=0,
                                   atol=1e-13 * np.abs(expected).max())

    def test_alpha_one_on_interval(self):
        mesh = interval_mesh(0.0, 1.0, 20)
        model = FieldModel(mesh=mesh, alpha=1, kappa=3.0, tau=0.5)
        fem = assemble_fem(mesh)
        q = build_precision(model, fem)
        expected = np.diag(model.tau) @ (
            np.diag(model.kappa**2 * fem.c_lumped) + fem.g.toarray()
        ) @ np.diag(model.tau)
        np.testing.assert_allclose(q.toarray(), expected, rtol=0, atol=1e-12)

    def test_support_grows_with_alpha(self):
        nnz = [
            build_precision(
                FieldModel(mesh=self.mesh, alpha=a, kappa=4.0, tau=1.0)
            ).nnz
            for a in (2, 3, 4)
        ]
        assert nnz[0] < nnz[1] < nnz[2]

    def test_per_vertex_parameters(self):
        rng = np.random.default_rng(2)
        kappa = rng.uniform(2.0, 8.0, self.mesh.n_vertices)
        tau = rng.uniform(0.2, 1.5, self.mesh.n_vertices)
        model = FieldModel(mesh=self.mesh, alpha=2, kappa=kappa, tau=tau)
        fem = assemble_fem(self.mesh)
        np.testing.assert_allclose(
            build_precision(model, fem).toarray(),
            _dense_power(model, fem, 2), rtol=0, atol=1e-10,
        )

    def test_positive_definite(self):
        model = FieldModel(mesh=self.mesh, alpha=2, kappa=1.0, tau=1.0)
        factorize(build_precision(model))  # raises if not SPD

    def test_rejects_unsupported_alpha(self):
        model = FieldModel(mesh=self.mesh, alpha=2.5, kappa=1.0, tau=1.0)
        with pytest.raises(ValueError, match="fractional"):
            build_precision(model)
        with pytest.raises(ValueError, match="alpha"):
            build_precision(
                FieldModel(mesh=self.mesh, alpha=5, kappa=1.0, tau=1.0)
            )

    def test_rejects_foreign_fem(self):
        other = assemble_fem(rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 5))
        model = FieldModel(mesh=self.mesh, alpha=2, kappa=1.0, tau=1.0)
        with pytest.raises(ValueError, match="different mesh"):
            build_precision(model, fem=other)


class TestFieldModel:
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 4, 4)

    def test_validates_parameters(self):
        with pytest.raises(ValueError, match="kappa"):
            FieldModel(mesh=self.mesh, alpha=2, kappa=-1.0, tau=1.0)
        with pytest.raises(ValueError, match="tau"):
            FieldModel(mesh=self.mesh, alpha=2, kappa=1.0, tau=0.0)
        with pytest.raises(ValueError, match="kappa"):
            FieldModel(mesh=self.mesh, alpha=2, kappa=np.ones(3), tau=1.0)

    def test_rejects_nonpositive_smoothness(self):
        with pytest.raises(ValueError, match="smoothness"):
            FieldModel(mesh=self.mesh, alpha=1, kappa=1.0, tau=1.0)
        with pytest.raises(ValueError, match="smoothness"):
            FieldModel(mesh=self.mesh, alpha=0.9, kappa=1.0, tau=1.0)

    def test_range_sigma_round_trip(self):
        model = FieldModel.from_range_sigma(
            self.mesh, alpha=2, practical_range=0.4, sigma2=2.5
        )
        np.testing.assert_allclose(model.practical_range, 0.4, rtol=1e-12)
        np.testing.assert_allclose(model.stationary_sigma2(), 2.5, rtol=1e-12)

    def test_stationary_sigma2_needs_constant_parameters(self):
        kappa = np.linspace(1.0, 2.0, self.mesh.n_vertices)
        model = FieldModel(mesh=self.mesh, alpha=2, kappa=kappa, tau=1.0)
        with pytest.raises(ValueError, match="constant"):
            model.stationary_sigma2()


class TestAr1:
    @pytest.mark.parametrize("phi", [-0.9, -0.2, 0.0, 0.35, 0.95])
    def test_inverse_is_exponential_correlation(self, phi):
        t = 12
        q = ar1_precision(phi, t)
        cov = np.linalg.inv(q.toarray())
        i, j = np.meshgrid(np.arange(t), np.arange(t), indexing="ij")
        np.testing.assert_allclose(cov, float(phi) ** np.abs(i - j),
                                   rtol=0, atol=1e-11)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ValueError, match="phi"):
            ar1_precision(1.0, 5)
        with pytest.raises(ValueError, match="time steps"):
            ar1_precision(0.5, 1)


class TestSpaceTime:
    def _model(self, t_steps=3, phi=0.6):
        mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 3, 3)
        spatial = FieldModel(mesh=mesh, alpha=2, kappa=6.0, tau=0.4)
        return SpaceTimeModel(spatial=spatial, t_steps=t_steps, phi=phi)

    def test_is_kronecker_product(self):
        model = self._model()
        q = build_spacetime_precision(model)
        q_s = build_precision(model.spatial).toarray()
        q_t = ar1_precision(model.phi, model.t_steps).toarray()
        np.testing.assert_allclose(q.toarray(), np.kron(q_t, q_s),
                                   rtol=0, atol=1e-12)

    def test_time_major_slice_covariance(self):
        # one time slice of the joint covariance is var_t * Q_s^-1
        model = self._model(t_steps=4, phi=0.7)
        q = build_spacetime_precision(model)
        cov = np.linalg.inv(q.toarray())
        n = model.spatial.mesh.n_vertices
        slice_cov = cov[2 * n:3 * n, 2 * n:3 * n]
        spatial_cov = np.linalg.inv(build_precision(model.spatial).toarray())
        np.testing.assert_allclose(slice_cov, spatial_cov, rtol=0,
                                   atol=1e-10 * spatial_cov.max())

    def test_damping_parameterisation(self):
        mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 2, 2)
        spatial = FieldModel(mesh=mesh, alpha=2, kappa=3.0, tau=1.0)
        model = SpaceTimeModel.from_damping(spatial, t_steps=5, dt=0.5,
                                            damping=1.2)
        np.testing.assert_allclose(model.phi, np.exp(-0.6), rtol=1e-15)
        with pytest.raises(ValueError, match="positive"):
            SpaceTimeModel.from_damping(spatial, 5, dt=-0.5, damping=1.0)

    def test_dimension_cap(self):
        model = self._model(t_steps=100)
        with pytest.raises(ValueError, match="cap"):
            build_spacetime_precision(model, max_dimension=1000)

    def test_validates_phi_and_steps(self):
        spatial = self._model().spatial
        with pytest.raises(ValueError, match="phi"):
            SpaceTimeModel(spatial=spatial, t_steps=3, phi=1.5)
        with pytest.raises(ValueError, match="time steps"):
            SpaceTimeModel(spatial=spatial, t_steps=1, phi=0.5)


class TestBarrier:
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 20, 20)

    def _strip_mask(self):
        centroids = self.mesh.vertices[self.mesh.simplices].mean(axis=1)
        return (centroids[:, 0] > 0.45) & (centroids[:, 0] < 0.55)

    def test_mask_shape_and_floor_validated(self):
        with pytest.raises(ValueError, match="one entry per simplex"):
            make_barrier_kappa(self.mesh, np.zeros(3, dtype=bool), 0.5)
        with pytest.raises(ValueError, match="range_factor"):
            make_barrier_kappa(self.mesh, self._strip_mask(), 0.5,
                               range_factor=5.0)
        with pytest.raises(ValueError, match="range_normal"):
            make_barrier_kappa(self.mesh, self._strip_mask(), -0.5)

    def test_kappa_values(self):
        mask = self._strip_mask()
        kappa = make_barrier_kappa(self.mesh, mask, range_normal=0.5,
                                   range_factor=20.0)
        base = np.sqrt(8.0) / 0.5
        assert set(np.round(kappa / base, 9)) == {1.0, 20.0}
        # vertices far from the strip keep the normal range
        far = np.abs(self.mesh.vertices[:, 0] - 0.5) > 0.2
        np.testing.assert_allclose(kappa[far], base)

    def test_correlation_blocked_across_barrier(self):
        mask = self._strip_mask()
        kappa = make_barrier_kappa(self.mesh, mask, range_normal=0.5)
        model = FieldModel(mesh=self.mesh, alpha=2, kappa=kappa, tau=1.0)
        cov = np.linalg.inv(build_precision(model).toarray())
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)

        def vid(x, y):
            return int(np.argmin(np.sum((self.mesh.vertices - [x, y]) ** 2,
                                        axis=1)))

        a, across, beside = vid(0.40, 0.5), vid(0.60, 0.5), vid(0.40, 0.3)
        assert corr[a, across] < 0.25 * corr[a, beside]
