"""Constant-density triangular panel solver for electrostatic surfaces.

Potentials use the normalised kernel ``1/(4 pi |r - r'|)`` (eps0 = 1), so a
unit-potential conductor carries total charge equal to ``C / eps0``.
"""
import numpy as np
import scipy.linalg

from ..kernels import charge_eval, triangle_integral


class SingularSystemError(np.linalg.LinAlgError):
    pass


class PanelMesh:
    """Triangle soup with per-panel centroid, area and unit normal."""

    def __init__(self, vertices, triangles, tags=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.intp)
        corners = self.vertices[self.triangles]
        self.corners = corners
        self.centroids = corners.mean(axis=1)
        cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
        twice = np.linalg.norm(cross, axis=1)
        self.areas = 0.5 * twice
        if np.any(self.areas <= 1e-14 * max(self.areas.max(), 1.0)):
            raise SingularSystemError("mesh contains degenerate panels")
        self.normals = cross / twice[:, None]
        self.tags = np.zeros(len(self.triangles), dtype=np.intp) if tags is None else np.asarray(tags)

    def __len__(self):
        return len(self.triangles)

    def boundary_edges(self):
        """Edges used by exactly one triangle (empty for a closed surface)."""
        e = np.sort(np.concatenate([self.triangles[:, [0, 1]], self.triangles[:, [1, 2]],
                                    self.triangles[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq[counts == 1]


def assemble(mesh: PanelMesh, points=None, chunk=256):
    """Collocation matrix ``A[i, j]`` = potential at point i from unit density on panel j."""
    points = mesh.centroids if points is None else np.asarray(points, float)
    out = np.empty((len(points), len(mesh)))
    for lo in range(0, len(points), chunk):
        hi = min(lo + chunk, len(points))
        out[lo:hi] = triangle_integral(mesh.corners, points[lo:hi])
    out /= 4.0 * np.pi
    return out


class PanelSolver:
    """LU-factored collocation system for a fixed mesh.

    The factorisation is computed once; ``solve`` may then be called for any
    number of boundary-potential vectors.
    """

    def __init__(self, mesh: PanelMesh):
        self.mesh = mesh
        mat = assemble(mesh)
        try:
            self._lu = scipy.linalg.lu_factor(mat, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystemError(str(exc)) from None
        diag = np.abs(np.diag(self._lu[0]))
        if diag.min() <= 1e-13 * diag.max():
            raise SingularSystemError("collocation matrix is numerically singular")

    def solve(self, boundary_potential):
        """Panel charge densities that reproduce the boundary potential at centroids."""
        rhs = np.asarray(boundary_potential, dtype=float)
        return scipy.linalg.lu_solve(self._lu, rhs)

    def charges(self, density):
        d = np.asarray(density, float)
        return d * (self.mesh.areas if d.ndim == 1 else self.mesh.areas[:, None])

    def potential(self, density, pts, order=0):
        """Exterior potential (and derivatives) from panel densities, centroid rule."""
        return charge_eval(self.mesh.centroids, self.charges(density), pts, order)

    def potential_exact(self, density, pts):
        """Exterior potential with exact panel integrals (slow, for checks)."""
        return assemble(self.mesh, pts) @ np.asarray(density, float)


def icosphere(radius=1.0, level=4):
    """Geodesic sphere with ``20 * 4**level`` outward-wound triangles."""
    t = (1.0 + 5**0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9),
             (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2),
             (3, 2, 6), (3, 6, 8), (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10),
             (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, float) / np.linalg.norm(v) for v in verts]
    for _ in range(level):
        cache = {}
        new_faces = []

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return PanelMesh(radius * np.array(verts), np.array(faces))


def sphere_capacitance(radius=1.0, level=4):
    """Capacitance / eps0 of an isolated sphere from the panel solver."""
    mesh = icosphere(radius, level)
    solver = PanelSolver(mesh)
    sigma = solver.solve(np.ones(len(mesh)))
    return float(solver.charges(sigma).sum())


CAP, PLANE = 0, 1


def mirror_mesh(mirror, center=(0.0, 0.0), rings=10, outer_radius=None, growth=1.12):
    """Spherical cap recessed below ``y = 0`` plus a flat annulus around it.

    Trap frame: the plane is ``y = 0`` and ``center`` is the in-plane
    ``(x, z)`` position of the aperture centre.  The cap uses ``rings``
    concentric rings with ``6k`` vertices on ring ``k``; the annulus keeps the
    rim's angular resolution and grows geometrically out to ``outer_radius``
    (default four aperture radii).  Panels are tagged CAP or PLANE.
    """
    r = mirror.aperture_radius
    roc = mirror.roc
    sag = mirror.sag
    outer_radius = 4.0 * r if outer_radius is None else outer_radius
    cx, cz = center

    def depth(rho):
        rho = np.minimum(rho, r)
        return -sag + (rho * rho) / (roc + np.sqrt(roc * roc - rho * rho))

    verts = [(0.0, 0.0)]
    ring_start = [0]
    radii = [0.0]
    for k in range(1, rings + 1):
        rho = r * k / rings
        ang = 2 * np.pi * np.arange(6 * k) / (6 * k)
        ring_start.append(len(verts))
        radii.append(rho)
        verts += [(rho * np.cos(a), rho * np.sin(a)) for a in ang]
    tris = []
    tags = []
    for k in range(1, rings + 1):
        inner_n = max(6 * (k - 1), 1)
        outer_n = 6 * k
        i0, o0 = ring_start[k - 1], ring_start[k]
        for j in range(outer_n):
            # walk the outer ring; pair each outer edge with the nearest inner vertex
            a = o0 + j
            b = o0 + (j + 1) % outer_n
            if k == 1:
                tris.append((0, a, b))
                tags.append(CAP)
                continue
            ji = (j * inner_n) // outer_n
            ji_next = ((j + 1) * inner_n) // outer_n
            ia = i0 + ji % inner_n
            tris.append((ia, a, b))
            tags.append(CAP)
            if ji_next != ji:
                tris.append((ia, b, i0 + ji_next % inner_n))
                tags.append(CAP)
    n_theta = 6 * rings
    step = r / rings
    rho = r
    prev = ring_start[rings]
    while rho < outer_radius - 1e-9:
        step *= growth
        rho = min(rho + step, outer_radius)
        if outer_radius - rho < 0.3 * step:
            rho = outer_radius
        start = len(verts)
        ang = 2 * np.pi * np.arange(n_theta) / n_theta
        verts += [(rho * np.cos(a), rho * np.sin(a)) for a in ang]
        for j in range(n_theta):
            a0, a1 = prev + j, prev + (j + 1) % n_theta
            b0, b1 = start + j, start + (j + 1) % n_theta
            tris += [(a0, b0, b1), (a0, b1, a1)]
            tags += [PLANE, PLANE]
        prev = start
    uv = np.array(verts)
    rr = np.hypot(uv[:, 0], uv[:, 1])
    y = np.where(rr <= r + 1e-12, depth(rr), 0.0)
    xyz = np.column_stack([cx + uv[:, 0], y, cz + uv[:, 1]])
    return PanelMesh(xyz, np.array(tris), np.array(tags))
