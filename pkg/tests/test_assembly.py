"""Finite element matrices checked against hand-computed local values
and the invariants the assembly must preserve (row sums, null space,
geometric equivariance, spectral accuracy).
"""

import numpy as np
import pytest
import scipy.linalg

from spdekit.assembly import assemble_fem, assemble_mass, assemble_stiffness
from spdekit.mesh import Mesh, icosphere, interval_mesh, rectangle_mesh


class TestExactLocalMatrices:
    def test_interval_two_cells(self):
        m = interval_mesh(0.0, 1.0, 2)
        c, lumped = assemble_mass(m)
        g = assemble_stiffness(m)
        expected_c = np.array([[2, 1, 0], [1, 4, 1], [0, 1, 2]]) / 12.0
        expected_g = np.array([[2, -2, 0], [-2, 4, -2], [0, -2, 2]],
                              dtype=float)
        np.testing.assert_allclose(c.toarray(), expected_c, rtol=1e-15)
        np.testing.assert_allclose(g.toarray(), expected_g, rtol=1e-15)
        np.testing.assert_allclose(lumped, [0.25, 0.5, 0.25], rtol=1e-15)

    def test_unit_right_triangle(self):
        verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        m = Mesh("planar", verts, np.array([[0, 1, 2]]))
        c, _ = assemble_mass(m)
        g = assemble_stiffness(m)
        expected_c = 0.5 * (np.ones((3, 3)) + np.eye(3)) / 12.0
        expected_g = np.array(
            [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]]
        )
        np.testing.assert_allclose(c.toarray(), expected_c, rtol=1e-15)
        np.testing.assert_allclose(g.toarray(), expected_g, atol=1e-15)


MESHES = [
    interval_mesh(-1.0, 2.0, 30),
    rectangle_mesh(0.0, 2.0, 0.0, 1.0, 9, 7),
    icosphere(2),
]


class TestInvariants:
    @pytest.mark.parametrize("mesh", MESHES, ids=lambda m: m.kind)
    def test_lumped_mass_is_row_sums(self, mesh):
        fem = assemble_fem(mesh)
        rows = np.asarray(fem.c_consistent.sum(axis=1)).ravel()
        np.testing.assert_array_equal(fem.c_lumped, rows)

    @pytest.mark.parametrize("mesh", MESHES, ids=lambda m: m.kind)
    def test_total_mass_is_domain_measure(self, mesh):
        fem = assemble_fem(mesh)
        np.testing.assert_allclose(fem.c_lumped.sum(), mesh.measures().sum(),
                                   rtol=1e-12)

    @pytest.mark.parametrize("mesh", MESHES, ids=lambda m: m.kind)
    def test_constants_in_stiffness_null_space(self, mesh):
        g = assemble_stiffness(mesh)
        resid = g @ np.ones(mesh.n_vertices)
        scale = np.abs(g.data).max()
        np.testing.assert_allclose(resid, 0.0, atol=1e-12 * scale)

    @pytest.mark.parametrize("mesh", MESHES, ids=lambda m: m.kind)
    def test_matrices_symmetric(self, mesh):
        fem = assemble_fem(mesh)
        assert (fem.c_consistent - fem.c_consistent.T).nnz == 0
        assert (fem.g - fem.g.T).nnz == 0

    def test_stiffness_rotation_invariant(self):
        base = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 6)
        theta = 0.83
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        turned = Mesh("planar", base.vertices @ rot.T, base.simplices.copy())
        g0 = assemble_stiffness(base).toarray()
        g1 = assemble_stiffness(turned).toarray()
        np.testing.assert_allclose(g1, g0, atol=1e-12 * np.abs(g0).max())

    def test_scaling_behaviour(self):
        # C scales with area, planar G not at all
        base = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 5, 4)
        scaled = Mesh("planar", 3.0 * base.vertices, base.simplices.copy())
        f0 = assemble_fem(base)
        f1 = assemble_fem(scaled)
        np.testing.assert_allclose(f1.c_consistent.toarray(),
                                   9.0 * f0.c_consistent.toarray(),
                                   rtol=1e-12)
        np.testing.assert_allclose(f1.g.toarray(), f0.g.toarray(),
                                   rtol=1e-12)


class TestAnisotropy:
    mesh = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 6, 5)

    def test_identity_tensor_matches_isotropic_exactly(self):
        g_iso = assemble_stiffness(self.mesh)
        g_eye = assemble_stiffness(self.mesh, anisotropy=np.eye(2))
        np.testing.assert_array_equal(g_eye.toarray(), g_iso.toarray())

    def test_scalar_tensor_scales_exactly(self):
        g_iso = assemble_stiffness(self.mesh)
        g_two = assemble_stiffness(self.mesh, anisotropy=2.0 * np.eye(2))
        np.testing.assert_array_equal(g_two.toarray(), 2.0 * g_iso.toarray())

    def test_per_triangle_field_accepted(self):
        h = np.tile(np.diag([2.0, 0.5]), (self.mesh.n_simplices, 1, 1))
        g = assemble_stiffness(self.mesh, anisotropy=h)
        resid = g @ np.ones(self.mesh.n_vertices)
        np.testing.assert_allclose(resid, 0.0, atol=1e-12)

    def test_rejects_asymmetric_tensor(self):
        with pytest.raises(ValueError, match="not symmetric"):
            assemble_stiffness(self.mesh,
                               anisotropy=np.array([[1.0, 0.3], [0.1, 1.0]]))

    def test_rejects_indefinite_tensor(self):
        with pytest.raises(ValueError, match="not positive definite"):
            assemble_stiffness(self.mesh,
                               anisotropy=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="shape"):
            assemble_stiffness(self.mesh, anisotropy=np.ones((3, 2, 2)))

    def test_rejects_nonplanar_mesh(self):
        with pytest.raises(ValueError, match="planar"):
            assemble_stiffness(interval_mesh(0.0, 1.0, 3),
                               anisotropy=np.eye(2))
        with pytest.raises(ValueError, match="planar"):
            assemble_stiffness(icosphere(1), anisotropy=np.eye(2))


class TestSpectralAccuracy:
    """Generalised eigenvalues of (G, C) discretise the Neumann Laplacian,
    whose spectrum on the unit square is pi^2 (k^2 + l^2)."""

    def test_smallest_neumann_eigenvalues(self):
        m = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 24, 24)
        fem = assemble_fem(m)
        vals = scipy.linalg.eigh(
            fem.g.toarray(), fem.c_consistent.toarray(), eigvals_only=True,
            subset_by_index=[0, 3],
        )
        assert abs(vals[0]) < 1e-10
        np.testing.assert_allclose(vals[1], np.pi**2, rtol=0.01)
        np.testing.assert_allclose(vals[2], np.pi**2, rtol=0.01)
        np.testing.assert_allclose(vals[3], 2.0 * np.pi**2, rtol=0.01)

    def test_anisotropy_stretches_spectrum(self):
        # with H = diag(4, 1) the modes become 4 pi^2 k^2 + pi^2 l^2
        m = rectangle_mesh(0.0, 1.0, 0.0, 1.0, 24, 24)
        c, _ = assemble_mass(m)
        g = assemble_stiffness(m, anisotropy=np.diag([4.0, 1.0]))
        vals = scipy.linalg.eigh(
            g.toarray(), c.toarray(), eigvals_only=True,
            subset_by_index=[0, 2],
        )
        np.testing.assert_allclose(vals[1], np.pi**2, rtol=0.02)
        np.testing.assert_allclose(vals[2], 4.0 * np.pi**2, rtol=0.02)
