"""Type-aware initial joint estimates from the contact interface."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .asset import JointEstimate, JointType
from .contact import ContactInterface
from .errors import (BelowMinInliers, CollinearPointsError, DegenerateContactError,
                     DegenerateInputError)
from .geom import SpatialIndex, TriMesh, canonical_sign, farthest_point_sample, pca

DELTA = 0.005
RANSAC_ITERATIONS = 1000
MIN_INLIER_RATIO = 0.3
OMEGA = 20.0
EPS_C = 0.005
STEP_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)
MAX_COLLIDE_VERTICES = 4096
COLLINEAR_FACTOR = 1e3


@dataclass(frozen=True, eq=False)
class CircleFit:
    center_2d: np.ndarray
    radius: float
    inlier_indices: np.ndarray
    inlier_ratio: float
    rms: float = 0.0


@dataclass(frozen=True, eq=False)
class LocalPlaneBasis:
    origin: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    normal: np.ndarray

    def project(self, points) -> np.ndarray:
        c = np.asarray(points, dtype=float) - self.origin
        return np.column_stack([c @ self.b1, c @ self.b2])

    def lift(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return self.origin + uv[..., :1] * self.b1 + uv[..., 1:2] * self.b2


@dataclass(frozen=True)
class PrismaticScore:
    axis: np.ndarray
    collide: float
    derail: float
    total: float

    def to_dict(self):
        return {"axis": self.axis.tolist(), "collide": self.collide,
                "derail": self.derail, "total": self.total}


# -- circle fitting ------------------------------------------------------------

def _circumcircles(a, b, c):
    """Vectorized circumcenters and radii of 2-D triangles (inf when collinear)."""
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    with np.errstate(divide="ignore", invalid="ignore"):
        ux = (cy * b2 - by * c2) / d
        uy = (bx * c2 - cx * b2) / d
    r = np.hypot(ux, uy)
    r[~np.isfinite(r)] = np.inf
    return np.column_stack([ux + a[:, 0], uy + a[:, 1]]), r


def fit_circle_lsq(points_2d, center0=None, radius0=None):
    """Geometric least-squares circle (algebraic fit as the starting point)."""
    p = np.asarray(points_2d, dtype=float)
    if center0 is None:
        A = np.column_stack([2 * p, np.ones(len(p))])
        sol = np.linalg.lstsq(A, (p * p).sum(1), rcond=None)[0]
        center0 = sol[:2]
        radius0 = np.sqrt(max(sol[2] + center0 @ center0, 0.0))
    x0 = np.r_[center0, radius0]
    if len(p) < 3:
        return np.asarray(center0, dtype=float), float(radius0)

    def res(x):
        return np.hypot(p[:, 0] - x[0], p[:, 1] - x[1]) - x[2]

    def jac(x):
        dx, dy = x[0] - p[:, 0], x[1] - p[:, 1]
        n = np.hypot(dx, dy)
        n[n == 0] = 1.0
        return np.column_stack([dx / n, dy / n, -np.ones(len(p))])

    out = least_squares(res, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return out.x[:2].copy(), float(abs(out.x[2]))


def _classify(p, center, radius, delta):
    r = np.abs(np.hypot(p[:, 0] - center[0], p[:, 1] - center[1]) - radius)
    idx = np.flatnonzero(r < delta)
    rms = float(np.sqrt(np.mean(r[idx] ** 2))) if len(idx) else np.inf
    return idx, rms


def ransac_circle(points_2d, delta: float = DELTA, iterations: int = RANSAC_ITERATIONS,
                  seed: int = 0, min_inlier_ratio: float = MIN_INLIER_RATIO) -> CircleFit:
    """Consensus circle fit over random circumcircle hypotheses, then LSQ refinement."""
    p = np.asarray(points_2d, dtype=float).reshape(-1, 2)
    n = len(p)
    if n < 3:
        raise DegenerateInputError(f"circle fit needs at least 3 points, got {n}")
    if delta <= 0:
        raise ValueError("delta must be positive")
    rng = np.random.default_rng(seed)
    diameter = float(np.linalg.norm(p.max(0) - p.min(0)))
    max_r = COLLINEAR_FACTOR * diameter

    centers = np.empty((0, 2))
    radii = np.empty(0)
    # draw in rounds, resampling rejected (repeated or collinear) triples
    for _ in range(50):
        need = iterations - len(radii)
        if need <= 0:
            break
        tri = rng.integers(0, n, size=(need, 3))
        distinct = (tri[:, 0] != tri[:, 1]) & (tri[:, 1] != tri[:, 2]) & (tri[:, 0] != tri[:, 2])
        tri = tri[distinct]
        c, r = _circumcircles(p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]])
        ok = (r <= max_r) & (r > 0)
        centers = np.concatenate([centers, c[ok]])
        radii = np.concatenate([radii, r[ok]])
    if len(radii) == 0:
        raise CollinearPointsError("no non-collinear point triple found")

    best_count, best_rms, best = -1, np.inf, 0
    chunk = max(1, 2_000_000 // n)
    for s in range(0, len(radii), chunk):
        c = centers[s:s + chunk]
        r = radii[s:s + chunk]
        res = np.abs(np.hypot(p[None, :, 0] - c[:, None, 0], p[None, :, 1] - c[:, None, 1])
                     - r[:, None])
        inl = res < delta
        count = inl.sum(1)
        sq = np.where(inl, res * res, 0.0).sum(1)
        with np.errstate(invalid="ignore", divide="ignore"):
            rms = np.sqrt(sq / count)
        for k in range(len(r)):
            if count[k] > best_count or (count[k] == best_count and rms[k] < best_rms):
                best_count, best_rms, best = int(count[k]), float(rms[k]), s + k

    center, radius = centers[best], float(radii[best])
    idx, rms = _classify(p, center, radius, delta)
    for _ in range(5):
        if len(idx) < 3:
            break
        c2, r2 = fit_circle_lsq(p[idx], center, radius)
        idx2, rms2 = _classify(p, c2, r2, delta)
        if len(idx2) < len(idx):
            break
        center, radius = c2, r2
        same = np.array_equal(idx2, idx)
        idx, rms = idx2, rms2
        if same:
            break
    ratio = len(idx) / n
    if ratio < min_inlier_ratio:
        raise BelowMinInliers(f"best circle explains {ratio:.1%} of points "
                              f"(minimum {min_inlier_ratio:.0%})")
    return CircleFit(np.asarray(center, dtype=float), radius, idx, ratio, rms)


# -- revolute -----------------------------------------------------------------

def _contact_pca(contact: ContactInterface):
    try:
        return pca(contact.points)
    except DegenerateInputError as e:
        raise DegenerateContactError(str(e), stage="init", part_id=contact.part_id) from None


def plane_basis(contact: ContactInterface) -> LocalPlaneBasis:
    res = _contact_pca(contact)
    if res.eigenvalues[1] <= 1e-12 * max(res.eigenvalues[0], 1e-300):
        raise DegenerateContactError("contact points are collinear", stage="init",
                                     part_id=contact.part_id)
    v = res.eigenvectors
    return LocalPlaneBasis(res.mean, v[:, 0], v[:, 1], v[:, 2])


def spin_fit(contact: ContactInterface, delta=DELTA, iterations=RANSAC_ITERATIONS, seed=0,
             min_inlier_ratio=MIN_INLIER_RATIO):
    """Spin estimate together with its circle fit and projection basis."""
    basis = plane_basis(contact)
    try:
        fit = ransac_circle(basis.project(contact.points), delta, iterations, seed,
                            min_inlier_ratio)
    except (BelowMinInliers, CollinearPointsError) as e:
        e.stage, e.part_id = "init", contact.part_id
        raise
    pivot = basis.origin + fit.center_2d[0] * basis.b1 + fit.center_2d[1] * basis.b2
    est = JointEstimate(contact.part_id, JointType.SPIN, basis.normal, pivot)
    return est, fit, basis


def init_spin(contact: ContactInterface, delta=DELTA, iterations=RANSAC_ITERATIONS, seed=0,
              min_inlier_ratio=MIN_INLIER_RATIO) -> JointEstimate:
    return spin_fit(contact, delta, iterations, seed, min_inlier_ratio)[0]


def init_hinge(contact: ContactInterface) -> JointEstimate:
    p = np.asarray(contact.points, dtype=float)
    if len(p) < 2:
        raise DegenerateContactError("hinge needs at least 2 contact points", stage="init",
                                     part_id=contact.part_id)
    mean = p.mean(0)
    c = p - mean
    if np.abs(c).max() <= 1e-12:
        raise DegenerateContactError("contact points coincide", stage="init",
                                     part_id=contact.part_id)
    w, v = np.linalg.eigh(c.T @ c / len(p))
    axis = canonical_sign(v[:, -1])
    return JointEstimate(contact.part_id, JointType.HINGE, axis, mean)


def classify_revolute(contact: ContactInterface, ratio: float = 0.25) -> JointType:
    """Heuristic spin/hinge split: ring-like contact (two comparable spreads) is a spin."""
    ev = _contact_pca(contact).eigenvalues
    return JointType.SPIN if ev[1] >= ratio * ev[0] else JointType.HINGE


# -- prismatic -----------------------------------------------------------------

def default_steps(part: TriMesh, axes=None, fractions=STEP_FRACTIONS) -> np.ndarray:
    """Signed steps shared by every candidate, scaled by the part's largest extent.

    A common step set keeps the derail term comparable across candidates;
    per-candidate scaling gives short axes tiny steps and so tiny derail.
    """
    if axes is None:
        axes = pca(part.vertices).eigenvectors
    proj = part.vertices @ np.asarray(axes, dtype=float).reshape(3, -1)
    ext = float(np.max(proj.max(0) - proj.min(0)))
    f = np.asarray(fractions, dtype=float)
    return np.concatenate([-f[::-1], f]) * ext


def collide_sample(part: TriMesh, max_vertices=MAX_COLLIDE_VERTICES) -> np.ndarray:
    return part.vertices[farthest_point_sample(part.vertices, max_vertices)]


def score_axis(axis, steps, sample, parent_index: SpatialIndex, part_index: SpatialIndex,
               contact_points, omega=OMEGA, eps_c=EPS_C) -> PrismaticScore:
    axis = np.asarray(axis, dtype=float)
    steps = np.asarray(steps, dtype=float)
    collide = 0.0
    derail = 0.0
    for d in steps:
        collide += float(np.mean(parent_index.distance(sample + d * axis) < eps_c))
        # distance from a fixed contact point to the part translated by d
        # equals the distance of (point - d*axis) to the untranslated part
        derail += float(np.mean(part_index.distance(contact_points - d * axis)))
    collide /= len(steps)
    derail /= len(steps)
    return PrismaticScore(axis, collide, derail, collide + omega * derail)


def init_prismatic(part: TriMesh, parent, contact: ContactInterface, steps=None,
                   omega: float = OMEGA, eps_c: float = EPS_C,
                   max_vertices: int = MAX_COLLIDE_VERTICES, part_index=None):
    """Pick the global PCA axis with the lowest collide + omega * derail cost."""
    if omega <= 0 or eps_c <= 0:
        raise ValueError("omega and eps_c must be positive")
    if steps is not None:
        steps = np.asarray(steps, dtype=float)
        if len(steps) == 0 or not (steps.min() < 0 < steps.max()):
            raise ValueError("steps must include both positive and negative displacements")
    try:
        res = pca(part.vertices)
    except DegenerateInputError as e:
        raise DegenerateInputError(f"degenerate part: {e}", stage="init",
                                   part_id=contact.part_id) from None
    parent_index = parent if isinstance(parent, SpatialIndex) else SpatialIndex(parent)
    part_index = part_index or SpatialIndex(part)
    sample = collide_sample(part, max_vertices)
    scores = []
    if steps is None:
        steps = default_steps(part, res.eigenvectors)
    for k in range(3):
        scores.append(score_axis(res.eigenvectors[:, k], steps, sample, parent_index,
                                 part_index, contact.points, omega, eps_c))
    best = int(np.argmin([s.total for s in scores]))
    est = JointEstimate(contact.part_id, JointType.PRISMATIC, scores[best].axis, None)
    return est, scores


def write_init_diagnostics(out_dir, part_id, record: dict) -> Path:
    path = Path(out_dir) / f"init_{part_id}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=1) + "\n")
    return path


def initialize(joint_type: JointType, part: TriMesh, parent, contact: ContactInterface,
               delta=DELTA, iterations=RANSAC_ITERATIONS, seed=0,
               min_inlier_ratio=MIN_INLIER_RATIO, omega=OMEGA, eps_c=EPS_C, steps=None):
    """Dispatch on joint type; returns (estimate, diagnostics record)."""
    rec = {"part_id": contact.part_id, "type": joint_type.value, "n_contact": len(contact)}
    if joint_type is JointType.SPIN:
        est, fit, basis = spin_fit(contact, delta, iterations, seed, min_inlier_ratio)
        rec["ransac"] = {"center_2d": fit.center_2d.tolist(), "radius": fit.radius,
                         "n_inliers": int(len(fit.inlier_indices)),
                         "inlier_ratio": fit.inlier_ratio, "rms": fit.rms,
                         "iterations": iterations, "delta": delta, "seed": seed}
        rec["basis"] = {"origin": basis.origin.tolist(), "b1": basis.b1.tolist(),
                        "b2": basis.b2.tolist()}
    elif joint_type is JointType.HINGE:
        est = init_hinge(contact)
    elif joint_type is JointType.PRISMATIC:
        est, scores = init_prismatic(part, parent, contact, steps, omega, eps_c)
        rec["candidates"] = [s.to_dict() for s in scores]
        rec["omega"], rec["eps_c"] = omega, eps_c
    else:
        raise ValueError(f"no initialization for joint type {joint_type.value}")
    rec["axis"] = est.axis.tolist()
    rec["pivot"] = None if est.pivot is None else est.pivot.tolist()
    return est, rec
