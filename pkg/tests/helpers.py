"""Small random geometry shared by the test modules."""
import numpy as np

from jointforge.geom import RigidTransform, TriMesh
from jointforge.geom.primitives import box


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_transform(rng, scale=0.5) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.uniform(-scale, scale, 3))


def unit_cube(h=1.0) -> TriMesh:
    return box([-0.5, -0.5, -0.5], [0.5, 0.5, 0.5], h)


def tetra(rng, center=(0.0, 0.0, 0.0), size=0.3) -> TriMesh:
    """Random non-degenerate tetrahedron, outward oriented."""
    while True:
        v = np.asarray(center) + rng.uniform(-size, size, (4, 3))
        vol = np.linalg.det(v[1:] - v[0]) / 6.0
        if abs(vol) > 1e-3 * size ** 3:
            break
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    if vol < 0:
        f = f[:, ::-1]
    return TriMesh(v, f)


def random_box(rng, h=None) -> TriMesh:
    lo = rng.uniform(-0.3, 0.0, 3)
    hi = lo + rng.uniform(0.05, 0.4, 3)
    return box(lo, hi, h or float(rng.uniform(0.05, 0.2)), transform=random_transform(rng, 0.2))


def angle_deg(a, b, undirected=True) -> float:
    c = float(np.dot(a, b))
    c = abs(c) if undirected else c
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


# one line per acceptance criterion, echoed in the pytest terminal summary
ACCEPTANCE_LINES = {}


def record_criterion(key, ok: bool, detail: str):
    key = str(key)
    ACCEPTANCE_LINES[key] = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[key])
    return ok
