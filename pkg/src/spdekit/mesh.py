"""Triangulations of intervals, planar domains, and the unit sphere.

A mesh is vertices plus simplices (segments in 1D, triangles otherwise)
with validation strong enough that downstream assembly can assume a sane
complex: indices in range, no degenerate elements, consistent orientation,
one edge-connected component.  Piecewise-linear basis evaluation and the
text file format live here too.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import MeshFormatError

KINDS = ("interval", "planar", "sphere")

# vertex columns / simplex columns per kind
_SHAPES = {"interval": (1, 2), "planar": (2, 3), "sphere": (3, 3)}


class Mesh:
    """A validated simplicial mesh.

    Parameters
    ----------
    kind : str
        'interval', 'planar', or 'sphere'.
    vertices : array, shape (n, d)
        Coordinates; d is 1, 2, 3 by kind.  Sphere vertices are
        normalised to unit length on construction.
    simplices : array, shape (m, k)
        Vertex indices; k is 2 for intervals, 3 otherwise.  Orientation
        is normalised in place (ascending coordinates in 1D, positive
        area in the plane, outward normal on the sphere).
    """

    def __init__(self, kind, vertices, simplices):
        if kind not in KINDS:
            raise ValueError(f"unknown mesh kind {kind!r}, expected one of {KINDS}")
        dim, k = _SHAPES[kind]
        vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        simplices = np.ascontiguousarray(simplices, dtype=np.int64)
        if vertices.ndim != 2 or vertices.shape[1] != dim:
            raise ValueError(f"{kind} mesh needs vertices of shape (n, {dim})")
        if simplices.ndim != 2 or simplices.shape[1] != k:
            raise ValueError(f"{kind} mesh needs simplices of shape (m, {k})")
        if not np.all(np.isfinite(vertices)):
            raise ValueError("vertex coordinates must be finite")
        n = len(vertices)
        if simplices.size and (simplices.min() < 0 or simplices.max() >= n):
            raise ValueError("simplex indices out of range")
        for row in range(len(simplices)):
            if len(set(simplices[row])) != k:
                raise ValueError(f"simplex {row} repeats a vertex")

        self.kind = kind
        self.vertices = vertices
        self.simplices = simplices

        if kind == "sphere":
            norms = np.linalg.norm(vertices, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-3):
                raise ValueError("sphere vertices must lie on the unit sphere")
            self.vertices = vertices / norms[:, None]

        self._orient()
        meas = self.measures()
        scale = self._scale()
        bad = np.flatnonzero(meas <= 1e-14 * scale ** self.intrinsic_dim)
        if bad.size:
            raise ValueError(f"degenerate simplex {bad[0]} (measure {meas[bad[0]]:g})")
        self._check_connected()
        self.boundary = self._boundary_vertices()

    # -- basic properties ------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_simplices(self):
        return len(self.simplices)

    @property
    def intrinsic_dim(self):
        return 1 if self.kind == "interval" else 2

    def _scale(self):
        if self.n_vertices == 0:
            return 1.0
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(max(span.max(), 1e-300))

    def measures(self):
        """Length or area of every simplex."""
        v = self.vertices
        s = self.simplices
        if self.kind == "interval":
            return np.abs(v[s[:, 1], 0] - v[s[:, 0], 0])
        e1 = v[s[:, 1]] - v[s[:, 0]]
        e2 = v[s[:, 2]] - v[s[:, 0]]
        if self.kind == "planar":
            return 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)

    def _orient(self):
        v = self.vertices
        s = self.simplices
        if self.kind == "interval":
            flip = v[s[:, 0], 0] > v[s[:, 1], 0]
        elif self.kind == "planar":
            e1 = v[s[:, 1]] - v[s[:, 0]]
            e2 = v[s[:, 2]] - v[s[:, 0]]
            flip = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0] < 0
        else:
            # outward normal: det(v0, v1, v2) positive
            det = np.einsum(
                "ij,ij->i", v[s[:, 0]], np.cross(v[s[:, 1]], v[s[:, 2]])
            )
            flip = det < 0
        if np.any(flip):
            s[flip, -2], s[flip, -1] = s[flip, -1].copy(), s[flip, -2].copy()

    def edges(self):
        """All simplex edges as an (e, 2) array of sorted vertex pairs, with repeats."""
        s = self.simplices
        if self.kind == "interval":
            pairs = s
        else:
            pairs = np.vstack([s[:, [0, 1]], s[:, [1, 2]], s[:, [0, 2]]])
        return np.sort(pairs, axis=1)

    def _check_connected(self):
        if self.n_vertices == 0:
            return
        e = self.edges()
        adj = sp.coo_matrix(
            (np.ones(len(e)), (e[:, 0], e[:, 1])),
            shape=(self.n_vertices, self.n_vertices),
        )
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise ValueError(f"mesh is not edge-connected ({ncomp} components)")

    def _boundary_vertices(self):
        out = np.zeros(self.n_vertices, dtype=bool)
        if self.kind == "interval":
            counts = np.bincount(self.simplices.ravel(), minlength=self.n_vertices)
            out[counts == 1] = True
            return out
        e = self.edges()
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        new = np.ones(len(e), dtype=bool)
        new[1:] = np.any(e[1:] != e[:-1], axis=1)
        # an edge on the boundary belongs to exactly one triangle
        first = np.flatnonzero(new)
        counts = np.diff(np.append(first, len(e)))
        for edge in e[first[counts == 1]]:
            out[edge] = True
        return out

    def __eq__(self, other):
        return (
            isinstance(other, Mesh)
            and self.kind == other.kind
            and np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.simplices, other.simplices)
        )


class ProjectionMatrix:
    """Sparse basis-evaluation matrix from mesh vertices to points.

    ``matrix`` is points-by-vertices CSR; row i holds the barycentric
    weights of point i (nonnegative, summing to one).  Points that fall
    outside the mesh get an all-zero row and a True entry in
    ``exterior`` - dropping or refusing them is the caller's decision.
    """

    def __init__(self, matrix, exterior, mesh):
        self.matrix = matrix.tocsr()
        self.exterior = np.asarray(exterior, dtype=bool)
        self.mesh = mesh

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, other):
        return self.matrix @ other

    def toarray(self):
        return self.matrix.toarray()


def vertex_weights(mesh):
    """Lumped masses: each simplex spreads its measure evenly over its corners."""
    w = np.zeros(mesh.n_vertices)
    share = mesh.measures() / mesh.simplices.shape[1]
    np.add.at(w, mesh.simplices.ravel(), np.repeat(share, mesh.simplices.shape[1]))
    return w


# -- point location and basis evaluation ---------------------------------

_BARY_TOL = 1e-10


def _bary_planar(tri_pts, pts):
    """Barycentric weights of pts (q, 2) in one triangle; (q, 3) array."""
    t = np.column_stack((tri_pts[1] - tri_pts[0], tri_pts[2] - tri_pts[0]))
    sol = np.linalg.solve(t, (pts - tri_pts[0]).T).T
    return np.column_stack((1.0 - sol[:, 0] - sol[:, 1], sol))


def _bary_sphere(tri_pts, pts):
    """Gnomonic projection onto the triangle plane, then plane barycentrics.

    Returns (q, 3) weights with NaN rows where the point is on the far
    side of the plane through the triangle.
    """
    normal = np.cross(tri_pts[1] - tri_pts[0], tri_pts[2] - tri_pts[0])
    if normal @ tri_pts[0] < 0:
        normal = -normal
    denom = pts @ normal
    out = np.full((len(pts), 3), np.nan)
    ok = denom > 1e-12
    if not np.any(ok):
        return out
    scale = (tri_pts[0] @ normal) / denom[ok]
    proj = pts[ok] * scale[:, None]
    e1 = tri_pts[1] - tri_pts[0]
    e2 = tri_pts[2] - tri_pts[0]
    gram = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    rhs = np.column_stack(((proj - tri_pts[0]) @ e1, (proj - tri_pts[0]) @ e2))
    sol = np.linalg.solve(gram, rhs.T).T
    out[ok] = np.column_stack((1.0 - sol[:, 0] - sol[:, 1], sol))
    return out


def _locate_cells(mesh, pts):
    """Assign each point to a simplex, lowest index winning ties.

    Returns (simplex index or -1, weights (p, k)).  Brute force scans
    simplices in order; beyond about 1e7 point-simplex tests a uniform
    grid over bounding boxes prunes the candidates (same tie-break).
    """
    p = len(pts)
    m = mesh.n_simplices
    found = np.full(p, -1, dtype=np.int64)
    weights = np.zeros((p, mesh.simplices.shape[1]))

    if mesh.kind == "interval":
        x = pts[:, 0]
        lo = mesh.vertices[mesh.simplices[:, 0], 0]
        hi = mesh.vertices[mesh.simplices[:, 1], 0]
        tol = _BARY_TOL * mesh._scale()
        for t in range(m):
            todo = found < 0
            if not np.any(todo):
                break
            inside = todo & (x >= lo[t] - tol) & (x <= hi[t] + tol)
            if np.any(inside):
                found[inside] = t
                lam = (x[inside] - lo[t]) / (hi[t] - lo[t])
                weights[inside, 0] = 1.0 - lam
                weights[inside, 1] = lam
        return found, weights

    bary = _bary_planar if mesh.kind == "planar" else _bary_sphere

    def test(tris, point_idx):
        for t in tris:
            if point_idx.size == 0:
                break
            w = bary(mesh.vertices[mesh.simplices[t]], pts[point_idx])
            inside = np.all(w >= -_BARY_TOL, axis=1) & ~np.any(np.isnan(w), axis=1)
            hit = point_idx[inside]
            found[hit] = t
            weights[hit] = w[inside]
            point_idx = point_idx[~inside]
        return point_idx

    if p * m <= 10_000_000 or mesh.kind == "sphere":
        test(range(m), np.arange(p))
        return found, weights

    # uniform grid over triangle bounding boxes
    mins = mesh.vertices.min(axis=0)
    maxs = mesh.vertices.max(axis=0)
    ncell = max(int(np.sqrt(m)), 1)
    width = np.maximum((maxs - mins) / ncell, 1e-300)

    def cell_of(xy):
        c = np.floor((xy - mins) / width).astype(np.int64)
        return np.clip(c, 0, ncell - 1)

    tri_min = cell_of(mesh.vertices[mesh.simplices].min(axis=1))
    tri_max = cell_of(mesh.vertices[mesh.simplices].max(axis=1))
    buckets = {}
    for t in range(m):
        for cx in range(tri_min[t, 0], tri_max[t, 0] + 1):
            for cy in range(tri_min[t, 1], tri_max[t, 1] + 1):
                buckets.setdefault((cx, cy), []).append(t)

    pc = cell_of(pts)
    order = np.lexsort((pc[:, 1], pc[:, 0]))
    start = 0
    while start < p:
        end = start
        key = (pc[order[start], 0], pc[order[start], 1])
        while end < p and (pc[order[end], 0], pc[order[end], 1]) == key:
            end += 1
        test(buckets.get(key, ()), order[start:end])
        start = end
    return found, weights


def evaluate_basis(mesh, points):
    """Hat-function weights of arbitrary points.

    Points are (p,) or (p, 1) for interval meshes, (p, 2) planar,
    (p, 3) on the sphere (normalised before lookup).  Returns a
    :class:`ProjectionMatrix`; exterior points are flagged, not errors.
    """
    points = np.atleast_1d(np.asarray(points, dtype=np.float64))
    if mesh.kind == "interval" and points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[1] != mesh.vertices.shape[1]:
        raise ValueError(
            f"points must have shape (p, {mesh.vertices.shape[1]}) for a "
            f"{mesh.kind} mesh"
        )
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    if mesh.kind == "sphere":
        norms = np.linalg.norm(points, axis=1)
        if np.any(norms <= 0):
            raise ValueError("sphere points must be nonzero directions")
        points = points / norms[:, None]

    found, weights = _locate_cells(mesh, points)
    inside = found >= 0
    weights = np.clip(weights, 0.0, None)
    weights[inside] /= weights[inside].sum(axis=1, keepdims=True)

    rows = np.repeat(np.flatnonzero(inside), mesh.simplices.shape[1])
    cols = mesh.simplices[found[inside]].ravel()
    vals = weights[inside].ravel()
    mat = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(points), mesh.n_vertices)
    )
    return ProjectionMatrix(mat, ~inside, mesh)


# -- file format ----------------------------------------------------------


def parse_mesh(text):
    """Parse the line-oriented mesh format.

    kind on the first content line, then the vertex count and that many
    coordinate lines, then the simplex count and that many 0-based index
    lines.  '#' starts a comment; blank lines are skipped.
    """
    items = []  # (line_number, tokens)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if body:
            items.append((lineno, body.split()))
    pos = 0

    def take(what):
        nonlocal pos
        if pos >= len(items):
            last = items[-1][0] if items else 1
            raise MeshFormatError(f"unexpected end of file, expected {what}", last)
        out = items[pos]
        pos += 1
        return out

    lineno, tok = take("mesh kind")
    if len(tok) != 1 or tok[0] not in KINDS:
        raise MeshFormatError(f"expected mesh kind from {KINDS}, got {tok}", lineno)
    kind = tok[0]
    dim, k = _SHAPES[kind]

    def count(what):
        lineno, tok = take(what)
        if len(tok) != 1 or not tok[0].lstrip("+").isdigit():
            raise MeshFormatError(f"expected {what} (one integer), got {tok}", lineno)
        return int(tok[0])

    n = count("vertex count")
    verts = np.empty((n, dim))
    for i in range(n):
        lineno, tok = take(f"vertex {i}")
        if len(tok) != dim:
            raise MeshFormatError(f"expected {dim} coordinates, got {len(tok)}", lineno)
        try:
            verts[i] = [float(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"bad coordinate in {tok}", lineno) from None

    m = count("simplex count")
    simp = np.empty((m, k), dtype=np.int64)
    for i in range(m):
        lineno, tok = take(f"simplex {i}")
        if len(tok) != k:
            raise MeshFormatError(f"expected {k} vertex indices, got {len(tok)}", lineno)
        try:
            simp[i] = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"bad vertex index in {tok}", lineno) from None

    if pos != len(items):
        raise MeshFormatError("trailing content after simplex list", items[pos][0])
    return Mesh(kind, verts, simp)


def load_mesh(path):
    with open(path, encoding="utf-8") as fh:
        return parse_mesh(fh.read())


def save_mesh(path, mesh):
    """Write a mesh in the text format; load_mesh(save_mesh(m)) == m."""
    lines = [mesh.kind, str(mesh.n_vertices)]
    for v in mesh.vertices:
        lines.append(" ".join(f"{c:.17g}" for c in v))
    lines.append(str(mesh.n_simplices))
    for s in mesh.simplices:
        lines.append(" ".join(str(i) for i in s))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- generators used by tests and examples --------------------------------


def interval_mesh(a, b, cells):
    """Uniform mesh of [a, b] with the given number of segments."""
    if cells < 1:
        raise ValueError("need at least one cell")
    x = np.linspace(a, b, cells + 1)
    seg = np.column_stack((np.arange(cells), np.arange(1, cells + 1)))
    return Mesh("interval", x[:, None], seg)


def rectangle_mesh(x0, x1, y0, y1, nx, ny):
    """Structured triangulation of a rectangle, nx-by-ny cells split in two."""
    if nx < 1 or ny < 1:
        raise ValueError("need at least one cell per direction")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack((gx.ravel(), gy.ravel()))

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return Mesh("planar", verts, np.array(tris, dtype=np.int64))


def icosphere(refinements=0):
    """Icosahedron subdivided ``refinements`` times, vertices on the unit sphere."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    verts = list(verts)
    for _ in range(refinements):
        cache = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                mid = verts[i] + verts[j]
                verts.append(mid / np.linalg.norm(mid))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = np.array(new_faces, dtype=np.int64)
    return Mesh("sphere", np.array(verts), faces)
