"""Closed, outward-oriented, evenly tessellated primitive meshes."""
from __future__ import annotations

import numpy as np

from .mesh import RigidTransform, TriMesh


def _orient_outward(v, f):
    t = v[f]
    vol = np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum()
    return f[:, ::-1].copy() if vol < 0 else f


def _weld(v, f):
    uniq, inv = np.unique(v, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1)[f]


def _grid(a, b, n):
    g = a + (b - a) * np.arange(n + 1) / n
    g[-1] = b  # exact endpoint so shared edges weld
    return g


def box(lo, hi, h: float = 0.02, transform: RigidTransform | None = None) -> TriMesh:
    """Axis-aligned box ``[lo, hi]`` with every face gridded at spacing <= ``h``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = np.maximum(1, np.ceil((hi - lo) / h - 1e-9).astype(int))
    verts, faces = [], []
    off = 0
    for axis in range(3):
        u, w = [k for k in range(3) if k != axis]
        gu, gw = _grid(lo[u], hi[u], n[u]), _grid(lo[w], hi[w], n[w])
        for side in (lo[axis], hi[axis]):
            U, W = np.meshgrid(gu, gw, indexing="ij")
            p = np.empty((U.size, 3))
            p[:, axis] = side
            p[:, u] = U.ravel()
            p[:, w] = W.ravel()
            i = np.arange(n[u])[:, None]
            j = np.arange(n[w])[None, :]
            a = (i * (n[w] + 1) + j).ravel()
            b = a + (n[w] + 1)
            q = np.stack([np.stack([a, b, b + 1], 1), np.stack([a, b + 1, a + 1], 1)], 1).reshape(-1, 3)
            # per-face orientation: normal of (du x dw) against outward direction
            sgn = 1.0 if side == hi[axis] else -1.0
            du = np.zeros(3)
            du[u] = 1.0
            dw = np.zeros(3)
            dw[w] = 1.0
            if np.cross(du, dw)[axis] * sgn < 0:
                q = q[:, ::-1]
            verts.append(p)
            faces.append(q + off)
            off += len(p)
    v, f = _weld(np.concatenate(verts), np.concatenate(faces))
    m = TriMesh(v, f)
    return m.transformed(transform) if transform is not None else m


def _subdivide_profile(profile, h, closed):
    pts = [np.asarray(p, dtype=float) for p in profile]
    segs = list(zip(pts, pts[1:] + ([pts[0]] if closed else [])))
    out = []
    for a, b in segs:
        k = max(1, int(np.ceil(np.linalg.norm(b - a) / h - 1e-9)))
        for i in range(k):
            out.append(a + (b - a) * i / k)
    if not closed:
        out.append(pts[-1])
    return np.array(out)


def revolve(profile, segments: int = 64, h: float = 0.01, closed: bool = False,
            transform: RigidTransform | None = None) -> TriMesh:
    """Revolve an (r, z) profile about +z.

    Open profiles must start and end on the axis (r == 0) to be watertight.
    """
    prof = _subdivide_profile(profile, h, closed)
    ang = 2 * np.pi * np.arange(segments) / segments
    c, s = np.cos(ang), np.sin(ang)
    verts = []
    ring_ids = []
    for r, z in prof:
        if r == 0.0:
            ring_ids.append(np.full(segments, len(verts)))
            verts.append((0.0, 0.0, z))
        else:
            ring_ids.append(np.arange(len(verts), len(verts) + segments))
            verts.extend(zip(r * c, r * s, np.full(segments, z)))
    rings = list(range(len(prof)))
    pairs = list(zip(rings, rings[1:] + ([0] if closed else [])))
    faces = []
    for k0, k1 in pairs:
        a = ring_ids[k0]
        b = ring_ids[k1]
        an = np.roll(a, -1)
        bn = np.roll(b, -1)
        for tri in (np.stack([a, b, bn], 1), np.stack([a, bn, an], 1)):
            ok = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
            faces.append(tri[ok])
    v = np.array(verts, dtype=float)
    f = _orient_outward(v, np.concatenate(faces))
    m = TriMesh(v, f)
    return m.transformed(transform) if transform is not None else m


def cylinder(radius, z0, z1, segments=64, h=0.01, transform=None,
             fan_caps: bool = False) -> TriMesh:
    """Closed cylinder along +z; ``fan_caps`` leaves the end discs without inner rings."""
    if not fan_caps:
        return revolve([(0.0, z0), (radius, z0), (radius, z1), (0.0, z1)],
                       segments, h, transform=transform)
    k = max(1, int(np.ceil((z1 - z0) / h - 1e-9)))
    side = [(radius, z0 + (z1 - z0) * i / k) for i in range(k)] + [(radius, z1)]
    return revolve([(0.0, z0)] + side + [(0.0, z1)], segments, np.inf, transform=transform)


def tube(r_in, r_out, z0, z1, segments=64, h=0.01, transform=None) -> TriMesh:
    return revolve([(r_in, z0), (r_out, z0), (r_out, z1), (r_in, z1)],
                   segments, h, closed=True, transform=transform)


def frame_along(axis, origin=(0.0, 0.0, 0.0)) -> RigidTransform:
    """Rigid transform sending +z to ``axis`` and the origin to ``origin``."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    z = np.array([0.0, 0.0, 1.0])
    c = float(z @ a)
    if c > 1 - 1e-15:
        r = np.eye(3)
    elif c < -1 + 1e-15:
        r = np.diag([1.0, -1.0, -1.0])
    else:
        from .mesh import rotation_about

        k = np.cross(z, a)
        r = rotation_about(k, np.arccos(np.clip(c, -1, 1)))
    return RigidTransform(r, np.asarray(origin, dtype=float))


def prism(profile, x0, x1, h=0.02, transform=None) -> TriMesh:
    """Extrude a convex counter-clockwise (y, z) polygon along +x from ``x0`` to ``x1``.

    Side faces are gridded at spacing <= ``h``; the end caps are fans.
    """
    pts = _subdivide_profile(profile, h, closed=True)
    m = len(pts)
    nx = max(1, int(np.ceil((x1 - x0) / h - 1e-9)))
    xs = _grid(x0, x1, nx)
    verts = np.empty(((nx + 1) * m + 2, 3))
    for k, x in enumerate(xs):
        verts[k * m:(k + 1) * m, 0] = x
        verts[k * m:(k + 1) * m, 1:] = pts
    c = pts.mean(0)
    verts[-2] = (x0, c[0], c[1])
    verts[-1] = (x1, c[0], c[1])
    j = np.arange(m)
    jn = np.roll(j, -1)
    faces = []
    for k in range(nx):
        a, b = k * m + j, k * m + jn
        an, bn = a + m, b + m
        faces += [np.stack([a, b, bn], 1), np.stack([a, bn, an], 1)]
    back = len(verts) - 2
    front = len(verts) - 1
    faces.append(np.stack([np.full(m, back), jn, j], 1))
    faces.append(np.stack([np.full(m, front), nx * m + j, nx * m + jn], 1))
    f = _orient_outward(verts, np.concatenate(faces))
    mesh = TriMesh(verts, f)
    return mesh.transformed(transform) if transform is not None else mesh


def chamfered_rect(half_y, half_z, chamfer, center=(0.0, 0.0)):
    """Counter-clockwise octagon: a rectangle with its four corners cut at 45 degrees."""
    a, b, c = half_y, half_z, chamfer
    cy, cz = center
    poly = [(a, -b + c), (a, b - c), (a - c, b), (-a + c, b),
            (-a, b - c), (-a, -b + c), (-a + c, -b), (a - c, -b)]
    return [(cy + y, cz + z) for y, z in poly]
