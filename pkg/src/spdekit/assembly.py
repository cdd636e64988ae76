"""Finite element matrices on simplicial meshes.

Piecewise-linear hat functions give a mass matrix C and a stiffness
matrix G per mesh; both are assembled once per mesh and are independent
of any field parameters, which get applied later when precision matrices
are built.  Sphere meshes are treated as their polyhedral surfaces:
each facet contributes its planar element matrices.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh


@dataclass
class FemMatrices:
    """Assembled operators for one mesh.

    ``c_consistent`` and ``g`` are full symmetric scipy CSC matrices;
    ``c_lumped`` holds the row sums of the consistent mass matrix, which
    are the hat-function integrals <psi_i, 1>.
    """

    mesh: Mesh
    c_consistent: sp.csc_matrix
    c_lumped: np.ndarray
    g: sp.csc_matrix


def _accumulate(mesh, local):
    """Sum (m, k, k) local matrices into a global CSC matrix."""
    s = mesh.simplices
    k = s.shape[1]
    rows = np.repeat(s, k, axis=1).ravel()
    cols = np.tile(s, (1, k)).ravel()
    mat = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(mesh.n_vertices, mesh.n_vertices)
    )
    out = mat.tocsc()
    out.sort_indices()
    return out


def assemble_mass(mesh):
    """Consistent mass matrix and its lumped (row-sum) diagonal."""
    meas = mesh.measures()
    k = mesh.simplices.shape[1]
    base = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    local = meas[:, None, None] * base
    c = _accumulate(mesh, local)
    lumped = np.asarray(c.sum(axis=1)).ravel()
    return c, lumped


def assemble_stiffness(mesh, anisotropy=None):
    """Stiffness matrix of the (optionally anisotropic) Laplacian.

    ``anisotropy`` is a per-triangle SPD 2x2 field, shape (m, 2, 2) or a
    single (2, 2) matrix, planar meshes only.  With it, entries are
    integrals of grad psi_i . H grad psi_j.
    """
    v = mesh.vertices
    s = mesh.simplices

    if mesh.kind == "interval":
        if anisotropy is not None:
            raise ValueError("anisotropy applies to planar meshes only")
        h = v[s[:, 1], 0] - v[s[:, 0], 0]
        local = (1.0 / h)[:, None, None] * np.array([[1.0, -1.0], [-1.0, 1.0]])
        return _accumulate(mesh, local)

    # edge opposite to each corner, consistently oriented
    e = np.stack(
        (v[s[:, 2]] - v[s[:, 1]], v[s[:, 0]] - v[s[:, 2]], v[s[:, 1]] - v[s[:, 0]]),
        axis=1,
    )
    area = mesh.measures()

    if anisotropy is None:
        local = np.einsum("tik,tjk->tij", e, e) / (4.0 * area)[:, None, None]
        return _accumulate(mesh, local)

    if mesh.kind != "planar":
        raise ValueError("anisotropy applies to planar meshes only")
    hmat = np.asarray(anisotropy, dtype=np.float64)
    if hmat.shape == (2, 2):
        hmat = np.broadcast_to(hmat, (mesh.n_simplices, 2, 2))
    if hmat.shape != (mesh.n_simplices, 2, 2):
        raise ValueError(
            f"anisotropy must have shape ({mesh.n_simplices}, 2, 2) or (2, 2)"
        )
    asym = np.abs(hmat[:, 0, 1] - hmat[:, 1, 0])
    scale = np.abs(hmat).max(axis=(1, 2))
    bad = np.flatnonzero(asym > 1e-12 * np.maximum(scale, 1e-300))
    if bad.size:
        raise ValueError(f"anisotropy tensor of triangle {bad[0]} is not symmetric")
    det = hmat[:, 0, 0] * hmat[:, 1, 1] - hmat[:, 0, 1] * hmat[:, 1, 0]
    bad = np.flatnonzero((det <= 0) | (hmat[:, 0, 0] <= 0))
    if bad.size:
        raise ValueError(
            f"anisotropy tensor of triangle {bad[0]} is not positive definite"
        )

    # Rotate each edge by 90 degrees to get (unnormalised) gradients, then
    # contract through H with explicit component arithmetic: for H = I this
    # reproduces the isotropic entries bit for bit.
    px = -e[:, :, 1]
    py = e[:, :, 0]
    hx = hmat[:, 0, 0, None] * px + hmat[:, 0, 1, None] * py
    hy = hmat[:, 1, 0, None] * px + hmat[:, 1, 1, None] * py
    local = (
        px[:, :, None] * hx[:, None, :] + py[:, :, None] * hy[:, None, :]
    ) / (4.0 * area)[:, None, None]
    return _accumulate(mesh, local)


def assemble_fem(mesh, anisotropy=None):
    """Mass and stiffness for a mesh in one call."""
    c, lumped = assemble_mass(mesh)
    g = assemble_stiffness(mesh, anisotropy)
    return FemMatrices(mesh=mesh, c_consistent=c, c_lumped=lumped, g=g)
