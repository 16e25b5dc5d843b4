"""Numba kernels for the triangle BVH.

Triangles are stored in BVH order: every node covers a contiguous range
``[node_lo, node_hi)`` of the reordered face array.  Leaves have
``left == -1``.
"""
import numpy as np
from numba import njit

LEAF_SIZE = 4
_FOUR_PI = 4.0 * np.pi


@njit(cache=True)
def build_bvh(tv0, tv1, tv2):
    n_tri = tv0.shape[0]
    cen = (tv0 + tv1 + tv2) / 3.0
    order = np.arange(n_tri)
    max_nodes = max(1, 2 * n_tri)
    bmin = np.empty((max_nodes, 3))
    bmax = np.empty((max_nodes, 3))
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    node_lo = np.zeros(max_nodes, dtype=np.int64)
    node_hi = np.zeros(max_nodes, dtype=np.int64)

    stack = np.empty(max_nodes, dtype=np.int64)
    stack[0] = 0
    sp = 1
    n_nodes = 1
    node_lo[0] = 0
    node_hi[0] = n_tri
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = node_lo[node]
        e = node_hi[node]
        for k in range(3):
            bmin[node, k] = np.inf
            bmax[node, k] = -np.inf
        cmin = np.full(3, np.inf)
        cmax = np.full(3, -np.inf)
        for i in range(s, e):
            t = order[i]
            for k in range(3):
                lo = min(tv0[t, k], tv1[t, k], tv2[t, k])
                hi = max(tv0[t, k], tv1[t, k], tv2[t, k])
                if lo < bmin[node, k]:
                    bmin[node, k] = lo
                if hi > bmax[node, k]:
                    bmax[node, k] = hi
                c = cen[t, k]
                if c < cmin[k]:
                    cmin[k] = c
                if c > cmax[k]:
                    cmax[k] = c
        if e - s <= LEAF_SIZE:
            continue
        axis = 0
        ext = cmax[0] - cmin[0]
        for k in range(1, 3):
            if cmax[k] - cmin[k] > ext:
                ext = cmax[k] - cmin[k]
                axis = k
        idx = order[s:e].copy()
        keys = np.empty(e - s)
        for i in range(e - s):
            keys[i] = cen[idx[i], axis]
        srt = np.argsort(keys, kind="mergesort")
        for i in range(e - s):
            order[s + i] = idx[srt[i]]
        mid = (s + e) // 2
        lch = n_nodes
        rch = n_nodes + 1
        n_nodes += 2
        left[node] = lch
        right[node] = rch
        node_lo[lch] = s
        node_hi[lch] = mid
        node_lo[rch] = mid
        node_hi[rch] = e
        stack[sp] = lch
        stack[sp + 1] = rch
        sp += 2
    return (order, bmin[:n_nodes].copy(), bmax[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            node_lo[:n_nodes].copy(), node_hi[:n_nodes].copy())


@njit(cache=True)
def build_caps(faces, node_lo, node_hi, left, n_vertices):
    """Signed boundary edges of every internal node's triangle patch."""
    n_nodes = node_lo.shape[0]
    total = 0
    for n in range(n_nodes):
        if left[n] != -1:
            total += 3 * (node_hi[n] - node_lo[n])
    cap_a = np.empty(total, dtype=np.int64)
    cap_b = np.empty(total, dtype=np.int64)
    cap_lo = np.zeros(n_nodes, dtype=np.int64)
    cap_hi = np.zeros(n_nodes, dtype=np.int64)
    pos = 0
    for n in range(n_nodes):
        cap_lo[n] = pos
        if left[n] == -1:
            cap_hi[n] = pos
            continue
        s = node_lo[n]
        e = node_hi[n]
        m = 3 * (e - s)
        keys = np.empty(m, dtype=np.int64)
        sign = np.empty(m, dtype=np.int64)
        j = 0
        for t in range(s, e):
            for k in range(3):
                a = faces[t, k]
                b = faces[t, (k + 1) % 3]
                if a < b:
                    keys[j] = a * n_vertices + b
                    sign[j] = 1
                else:
                    keys[j] = b * n_vertices + a
                    sign[j] = -1
                j += 1
        srt = np.argsort(keys, kind="mergesort")
        i = 0
        while i < m:
            key = keys[srt[i]]
            acc = 0
            while i < m and keys[srt[i]] == key:
                acc += sign[srt[i]]
                i += 1
            if acc != 0:
                lo_v = key // n_vertices
                hi_v = key % n_vertices
                for _ in range(abs(acc)):
                    if acc > 0:
                        cap_a[pos] = lo_v
                        cap_b[pos] = hi_v
                    else:
                        cap_a[pos] = hi_v
                        cap_b[pos] = lo_v
                    pos += 1
        cap_hi[n] = pos
    return cap_a[:pos].copy(), cap_b[:pos].copy(), cap_lo, cap_hi


@njit(cache=True, inline="always")
def _aabb_dist2(px, py, pz, bmin, bmax, n):
    d = 0.0
    v = bmin[n, 0] - px
    if v > 0.0:
        d += v * v
    else:
        v = px - bmax[n, 0]
        if v > 0.0:
            d += v * v
    v = bmin[n, 1] - py
    if v > 0.0:
        d += v * v
    else:
        v = py - bmax[n, 1]
        if v > 0.0:
            d += v * v
    v = bmin[n, 2] - pz
    if v > 0.0:
        d += v * v
    else:
        v = pz - bmax[n, 2]
        if v > 0.0:
            d += v * v
    return d


@njit(cache=True)
def closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point to p on triangle abc (Voronoi-region walk)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx - ax
    acy = cy - ay
    acz = cz - az
    apx = px - ax
    apy = py - ay
    apz = pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx = px - bx
    bpy = py - by
    bpz = pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx = px - cx
    cpy = py - cy
    cpz = pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (ax + abx * v + acx * w, ay + aby * v + acy * w,
            az + abz * v + acz * w)


@njit(cache=True)
def closest_points(points, tv0, tv1, tv2, bmin, bmax, left, right, node_lo, node_hi):
    q = points.shape[0]
    dist = np.empty(q)
    cps = np.empty((q, 3))
    tri = np.empty(q, dtype=np.int64)
    stack = np.empty(128, dtype=np.int64)
    for i in range(q):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        best = np.inf
        bt = -1
        bx = 0.0
        by = 0.0
        bz = 0.0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            if _aabb_dist2(px, py, pz, bmin, bmax, n) >= best:
                continue
            if left[n] == -1:
                for t in range(node_lo[n], node_hi[n]):
                    x, y, z = closest_on_triangle(
                        px, py, pz, tv0[t, 0], tv0[t, 1], tv0[t, 2],
                        tv1[t, 0], tv1[t, 1], tv1[t, 2],
                        tv2[t, 0], tv2[t, 1], tv2[t, 2])
                    d2 = (px - x) ** 2 + (py - y) ** 2 + (pz - z) ** 2
                    if d2 < best:
                        best = d2
                        bt = t
                        bx = x
                        by = y
                        bz = z
            else:
                lc = left[n]
                rc = right[n]
                dl = _aabb_dist2(px, py, pz, bmin, bmax, lc)
                dr = _aabb_dist2(px, py, pz, bmin, bmax, rc)
                if dl <= dr:
                    stack[sp] = rc
                    stack[sp + 1] = lc
                else:
                    stack[sp] = lc
                    stack[sp + 1] = rc
                sp += 2
        dist[i] = np.sqrt(best)
        cps[i, 0] = bx
        cps[i, 1] = by
        cps[i, 2] = bz
        tri[i] = bt
    return dist, cps, tri


@njit(cache=True, inline="always")
def _solid_angle(ax, ay, az, bx, by, bz, cx, cy, cz):
    la = np.sqrt(ax * ax + ay * ay + az * az)
    lb = np.sqrt(bx * bx + by * by + bz * bz)
    lc = np.sqrt(cx * cx + cy * cy + cz * cz)
    det = (ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx)
           + az * (bx * cy - by * cx))
    dab = ax * bx + ay * by + az * bz
    dac = ax * cx + ay * cy + az * cz
    dbc = bx * cx + by * cy + bz * cz
    den = la * lb * lc + dab * lc + dac * lb + dbc * la
    return 2.0 * np.arctan2(det, den)


@njit(cache=True)
def winding_numbers(points, vertices, faces, bmin, bmax, left, right,
                    node_lo, node_hi, cap_a, cap_b, cap_lo, cap_hi, margin):
    """Exact generalized winding number per query point.

    A node whose box excludes the query contributes minus the winding number
    of the fan closing its boundary, which is exact because the closed chain
    (patch plus fan) lies inside the box.
    """
    q = points.shape[0]
    out = np.empty(q)
    stack = np.empty(128, dtype=np.int64)
    for i in range(q):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        w = 0.0
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            outside = (px < bmin[n, 0] - margin or px > bmax[n, 0] + margin
                       or py < bmin[n, 1] - margin or py > bmax[n, 1] + margin
                       or pz < bmin[n, 2] - margin or pz > bmax[n, 2] + margin)
            n_cap = cap_hi[n] - cap_lo[n]
            if outside and left[n] != -1 and n_cap < node_hi[n] - node_lo[n]:
                ox = 0.5 * (bmin[n, 0] + bmax[n, 0]) - px
                oy = 0.5 * (bmin[n, 1] + bmax[n, 1]) - py
                oz = 0.5 * (bmin[n, 2] + bmax[n, 2]) - pz
                for k in range(cap_lo[n], cap_hi[n]):
                    a = cap_a[k]
                    b = cap_b[k]
                    w += _solid_angle(
                        ox, oy, oz,
                        vertices[a, 0] - px, vertices[a, 1] - py, vertices[a, 2] - pz,
                        vertices[b, 0] - px, vertices[b, 1] - py, vertices[b, 2] - pz)
                continue
            if left[n] == -1:
                for t in range(node_lo[n], node_hi[n]):
                    a = faces[t, 0]
                    b = faces[t, 1]
                    c = faces[t, 2]
                    w += _solid_angle(
                        vertices[a, 0] - px, vertices[a, 1] - py, vertices[a, 2] - pz,
                        vertices[b, 0] - px, vertices[b, 1] - py, vertices[b, 2] - pz,
                        vertices[c, 0] - px, vertices[c, 1] - py, vertices[c, 2] - pz)
            else:
                stack[sp] = left[n]
                stack[sp + 1] = right[n]
                sp += 2
        out[i] = w / _FOUR_PI
    return out


@njit(cache=True)
def ray_crossings(points, direction, tv0, tv1, tv2, bmin, bmax, left, right,
                  node_lo, node_hi, tol):
    """Signed count of surface crossings along a ray (exits minus entries).

    For a closed mesh this is the winding number. Returns NaN for a query
    whose ray grazes an edge or vertex, or that starts on the surface.
    """
    q = points.shape[0]
    out = np.empty(q)
    stack = np.empty(128, dtype=np.int64)
    dx = direction[0]
    dy = direction[1]
    dz = direction[2]
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    for i in range(q):
        px = points[i, 0]
        py = points[i, 1]
        pz = points[i, 2]
        w = 0.0
        bad = False
        stack[0] = 0
        sp = 1
        while sp > 0 and not bad:
            sp -= 1
            n = stack[sp]
            t0 = (bmin[n, 0] - px) * ix
            t1 = (bmax[n, 0] - px) * ix
            tmin = min(t0, t1)
            tmax = max(t0, t1)
            t0 = (bmin[n, 1] - py) * iy
            t1 = (bmax[n, 1] - py) * iy
            tmin = max(tmin, min(t0, t1))
            tmax = min(tmax, max(t0, t1))
            t0 = (bmin[n, 2] - pz) * iz
            t1 = (bmax[n, 2] - pz) * iz
            tmin = max(tmin, min(t0, t1))
            tmax = min(tmax, max(t0, t1))
            if tmax < 0.0 or tmin > tmax + 1e-12:
                continue
            if left[n] != -1:
                stack[sp] = left[n]
                stack[sp + 1] = right[n]
                sp += 2
                continue
            for t in range(node_lo[n], node_hi[n]):
                ax = tv0[t, 0]
                ay = tv0[t, 1]
                az = tv0[t, 2]
                e1x = tv1[t, 0] - ax
                e1y = tv1[t, 1] - ay
                e1z = tv1[t, 2] - az
                e2x = tv2[t, 0] - ax
                e2y = tv2[t, 1] - ay
                e2z = tv2[t, 2] - az
                hx = dy * e2z - dz * e2y
                hy = dz * e2x - dx * e2z
                hz = dx * e2y - dy * e2x
                det = e1x * hx + e1y * hy + e1z * hz
                scale = (abs(e1x) + abs(e1y) + abs(e1z)) * (abs(e2x) + abs(e2y) + abs(e2z))
                if abs(det) <= 1e-12 * scale:
                    # ray parallel to the triangle plane; ambiguous only if coplanar
                    nx = e1y * e2z - e1z * e2y
                    ny = e1z * e2x - e1x * e2z
                    nz = e1x * e2y - e1y * e2x
                    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
                    if nn > 0.0 and abs(nx * (px - ax) + ny * (py - ay) + nz * (pz - az)) <= tol * nn:
                        bad = True
                        break
                    continue
                inv = 1.0 / det
                sx = px - ax
                sy = py - ay
                sz = pz - az
                u = (sx * hx + sy * hy + sz * hz) * inv
                if u < -tol or u > 1.0 + tol:
                    continue
                qx = sy * e1z - sz * e1y
                qy = sz * e1x - sx * e1z
                qz = sx * e1y - sy * e1x
                v = (dx * qx + dy * qy + dz * qz) * inv
                if v < -tol or u + v > 1.0 + tol:
                    continue
                tt = (e2x * qx + e2y * qy + e2z * qz) * inv
                if tt < -tol:
                    continue
                if (tt <= tol or u <= tol or v <= tol or u + v >= 1.0 - tol):
                    bad = True
                    break
                w += -1.0 if det > 0.0 else 1.0  # det = -direction . normal
        out[i] = np.nan if bad else w
    return out


@njit(cache=True, inline="always")
def _sub(a, b):
    return a[0] - b[0], a[1] - b[1], a[2] - b[2]


@njit(cache=True)
def _pt_tri_dist2(p, a, b, c):
    x, y, z = closest_on_triangle(p[0], p[1], p[2], a[0], a[1], a[2],
                                  b[0], b[1], b[2], c[0], c[1], c[2])
    return (p[0] - x) ** 2 + (p[1] - y) ** 2 + (p[2] - z) ** 2


@njit(cache=True)
def _seg_seg_dist2(p1, q1, p2, q2):
    d1x, d1y, d1z = _sub(q1, p1)
    d2x, d2y, d2z = _sub(q2, p2)
    rx, ry, rz = _sub(p1, p2)
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    eps = 1e-30
    if a <= eps and e <= eps:
        return rx * rx + ry * ry + rz * rz
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > eps:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    cx = p1[0] + d1x * s - (p2[0] + d2x * t)
    cy = p1[1] + d1y * s - (p2[1] + d2y * t)
    cz = p1[2] + d1z * s - (p2[2] + d2z * t)
    return cx * cx + cy * cy + cz * cz


@njit(cache=True)
def _plane_side(a, b, c, p0, p1, p2, tol):
    """+1 / -1 if p0..p2 all lie strictly beyond tol on one side of plane abc."""
    ux, uy, uz = _sub(b, a)
    vx, vy, vz = _sub(c, a)
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    nn = np.sqrt(nx * nx + ny * ny + nz * nz)
    if nn == 0.0:
        return 0
    nx /= nn
    ny /= nn
    nz /= nn
    d0 = (p0[0] - a[0]) * nx + (p0[1] - a[1]) * ny + (p0[2] - a[2]) * nz
    d1 = (p1[0] - a[0]) * nx + (p1[1] - a[1]) * ny + (p1[2] - a[2]) * nz
    d2 = (p2[0] - a[0]) * nx + (p2[1] - a[1]) * ny + (p2[2] - a[2]) * nz
    if d0 > tol and d1 > tol and d2 > tol:
        return 1
    if d0 < -tol and d1 < -tol and d2 < -tol:
        return -1
    return 0


@njit(cache=True)
def _seg_pierces(e0, e1, a, b, c, tol):
    ux, uy, uz = _sub(b, a)
    vx, vy, vz = _sub(c, a)
    nx = uy * vz - uz * vy
    ny = uz * vx - ux * vz
    nz = ux * vy - uy * vx
    d0 = (e0[0] - a[0]) * nx + (e0[1] - a[1]) * ny + (e0[2] - a[2]) * nz
    d1 = (e1[0] - a[0]) * nx + (e1[1] - a[1]) * ny + (e1[2] - a[2]) * nz
    if (d0 > 0.0 and d1 < 0.0) or (d0 < 0.0 and d1 > 0.0):
        t = d0 / (d0 - d1)
        x = np.empty(3)
        for k in range(3):
            x[k] = e0[k] + t * (e1[k] - e0[k])
        return _pt_tri_dist2(x, a, b, c) <= tol * tol
    return False


@njit(cache=True)
def tri_tri_intersect(p0, p1, p2, q0, q1, q2, tol):
    """True iff the closed triangles intersect or come within ``tol``."""
    if _plane_side(q0, q1, q2, p0, p1, p2, tol) != 0:
        return False
    if _plane_side(p0, p1, p2, q0, q1, q2, tol) != 0:
        return False
    if (_seg_pierces(p0, p1, q0, q1, q2, tol) or _seg_pierces(p1, p2, q0, q1, q2, tol)
            or _seg_pierces(p2, p0, q0, q1, q2, tol)):
        return True
    if (_seg_pierces(q0, q1, p0, p1, p2, tol) or _seg_pierces(q1, q2, p0, p1, p2, tol)
            or _seg_pierces(q2, q0, p0, p1, p2, tol)):
        return True
    t2 = tol * tol
    if (_pt_tri_dist2(p0, q0, q1, q2) <= t2 or _pt_tri_dist2(p1, q0, q1, q2) <= t2
            or _pt_tri_dist2(p2, q0, q1, q2) <= t2):
        return True
    if (_pt_tri_dist2(q0, p0, p1, p2) <= t2 or _pt_tri_dist2(q1, p0, p1, p2) <= t2
            or _pt_tri_dist2(q2, p0, p1, p2) <= t2):
        return True
    pe = ((p0, p1), (p1, p2), (p2, p0))
    qe = ((q0, q1), (q1, q2), (q2, q0))
    for i in range(3):
        for j in range(3):
            if _seg_seg_dist2(pe[i][0], pe[i][1], qe[j][0], qe[j][1]) <= t2:
                return True
    return False


@njit(cache=True)
def any_tri_hit(q0s, q1s, q2s, tv0, tv1, tv2, bmin, bmax, left, right,
                node_lo, node_hi, tol):
    """Whether any query triangle intersects any indexed triangle."""
    stack = np.empty(128, dtype=np.int64)
    tmin = np.empty(3)
    tmax = np.empty(3)
    for j in range(q0s.shape[0]):
        for k in range(3):
            tmin[k] = min(q0s[j, k], q1s[j, k], q2s[j, k]) - tol
            tmax[k] = max(q0s[j, k], q1s[j, k], q2s[j, k]) + tol
        stack[0] = 0
        sp = 1
        while sp > 0:
            sp -= 1
            n = stack[sp]
            if (tmin[0] > bmax[n, 0] or tmax[0] < bmin[n, 0]
                    or tmin[1] > bmax[n, 1] or tmax[1] < bmin[n, 1]
                    or tmin[2] > bmax[n, 2] or tmax[2] < bmin[n, 2]):
                continue
            if left[n] == -1:
                for t in range(node_lo[n], node_hi[n]):
                    if tri_tri_intersect(q0s[j], q1s[j], q2s[j],
                                         tv0[t], tv1[t], tv2[t], tol):
                        return True
            else:
                stack[sp] = left[n]
                stack[sp + 1] = right[n]
                sp += 2
    return False


@njit(cache=True)
def farthest_point_order(points, k, start):
    n = points.shape[0]
    k = min(k, n)
    out = np.empty(k, dtype=np.int64)
    d = np.full(n, np.inf)
    cur = start
    for i in range(k):
        out[i] = cur
        best = -1.0
        nxt = 0
        for j in range(n):
            dx = points[j, 0] - points[cur, 0]
            dy = points[j, 1] - points[cur, 1]
            dz = points[j, 2] - points[cur, 2]
            dd = dx * dx + dy * dy + dz * dz
            if dd < d[j]:
                d[j] = dd
            if d[j] > best:
                best = d[j]
                nxt = j
        cur = nxt
    return out
