from __future__ import annotations

import numpy as np

from ..errors import EmptyMeshError
from . import _kernels as K
from .mesh import RigidTransform, TriMesh

TOUCH_TOL = 1e-9
_RAY = np.array([0.5377, 0.8342, 0.1213]) / np.linalg.norm([0.5377, 0.8342, 0.1213])


class SpatialIndex:
    """BVH over a mesh's triangles with exact distance and winding queries.

    ``approximate_sign`` is set for open meshes: the winding-number sign is
    still reported but is only meaningful where the surface nearly closes.
    """

    def __init__(self, mesh: TriMesh):
        if mesh.n_faces == 0:
            raise EmptyMeshError("cannot index an empty mesh")
        self.mesh = mesh
        tri = mesh.triangles
        order, bmin, bmax, left, right, lo, hi = K.build_bvh(
            np.ascontiguousarray(tri[:, 0]), np.ascontiguousarray(tri[:, 1]),
            np.ascontiguousarray(tri[:, 2]))
        self.face_order = order
        self._faces = np.ascontiguousarray(mesh.faces[order])
        self._tv = [np.ascontiguousarray(tri[order, k]) for k in range(3)]
        self._nodes = (bmin, bmax, left, right, lo, hi)
        self._vertices = np.ascontiguousarray(mesh.vertices)
        self._caps = K.build_caps(self._faces, lo, hi, left, mesh.n_vertices)
        scale = float(np.abs(mesh.vertices).max()) + 1.0
        self._margin = 1e-12 * scale
        self._ray_tol = 1e-10
        self.watertight = mesh.is_watertight()
        self.approximate_sign = not self.watertight

    @property
    def bounds(self) -> np.ndarray:
        return np.stack([self._nodes[0][0], self._nodes[1][0]])

    def closest(self, points):
        """Exact closest surface points: (distances, points, face ids)."""
        p = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        d, cp, t = K.closest_points(p, *self._tv, *self._nodes)
        return d, cp, self.face_order[t]

    def distance(self, points) -> np.ndarray:
        p = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        return K.closest_points(p, *self._tv, *self._nodes)[0]

    def winding_number(self, points, exact: bool = False) -> np.ndarray:
        """Generalized winding number.

        On watertight meshes the signed ray-crossing count gives the same
        integer far more cheaply near the surface; queries whose ray grazes
        an edge fall back to the hierarchical solid-angle sum, as does
        every query when ``exact`` is set or the mesh is open.
        """
        p = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 3))
        bmin, bmax, left, right, lo, hi = self._nodes
        if exact or not self.watertight:
            return K.winding_numbers(p, self._vertices, self._faces, bmin, bmax, left,
                                     right, lo, hi, *self._caps, self._margin)
        w = K.ray_crossings(p, _RAY, *self._tv, *self._nodes, self._ray_tol)
        bad = np.flatnonzero(np.isnan(w))
        if len(bad):
            w[bad] = K.winding_numbers(np.ascontiguousarray(p[bad]), self._vertices,
                                       self._faces, bmin, bmax, left, right, lo, hi,
                                       *self._caps, self._margin)
        return w

    def signed_distance(self, points) -> np.ndarray:
        d = self.distance(points)
        w = self.winding_number(points)
        return np.where(w > 0.5, -d, d)

    def intersects_triangles(self, tris, tol: float = TOUCH_TOL) -> bool:
        tris = np.asarray(tris, dtype=float)
        return bool(K.any_tri_hit(np.ascontiguousarray(tris[:, 0]),
                                  np.ascontiguousarray(tris[:, 1]),
                                  np.ascontiguousarray(tris[:, 2]),
                                  *self._tv, *self._nodes, tol))


def _as_index(x) -> SpatialIndex:
    return x if isinstance(x, SpatialIndex) else SpatialIndex(x)


def nearest_surface_distance(index: SpatialIndex, p):
    """Distance and closest surface point for one point or an (n, 3) batch."""
    p = np.asarray(p, dtype=float)
    d, cp, _ = index.closest(p)
    if p.ndim == 1:
        return float(d[0]), cp[0]
    return d, cp


def signed_distance(index: SpatialIndex, p):
    """Negative inside (winding number > 0.5), positive outside."""
    p = np.asarray(p, dtype=float)
    s = index.signed_distance(p)
    return float(s[0]) if p.ndim == 1 else s


def mesh_intersects(a, b, transform_b: RigidTransform | None = None,
                    tol: float = TOUCH_TOL) -> bool:
    """Exact triangle-triangle intersection test of ``a`` and transformed ``b``.

    Touching within ``tol`` counts as intersecting.
    """
    ia = _as_index(a)
    mb = b.mesh if isinstance(b, SpatialIndex) else b
    verts = mb.vertices if transform_b is None else transform_b.apply(mb.vertices)
    tris = verts[mb.faces]
    lo = tris.min(axis=(0, 1)) - tol
    hi = tris.max(axis=(0, 1)) + tol
    ab = ia.bounds
    if np.any(lo > ab[1]) or np.any(hi < ab[0]):
        return False
    tmin = tris.min(axis=1)
    tmax = tris.max(axis=1)
    near = np.all(tmax >= ab[0] - tol, axis=1) & np.all(tmin <= ab[1] + tol, axis=1)
    if not near.any():
        return False
    return ia.intersects_triangles(tris[near], tol)
