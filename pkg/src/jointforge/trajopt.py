"""Refinement of joint parameters by minimizing the trajectory deviation loss."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asset import JointEstimate, JointType
from .contact import ContactInterface
from .errors import NonFiniteLoss
from .geom import SpatialIndex, farthest_point_sample, rotation_about

REVOLUTE_STATES = np.radians([-30.0, -20.0, -10.0, 10.0, 20.0, 30.0])
PRISMATIC_FRACTIONS = np.array([-0.3, -0.2, -0.1, 0.1, 0.2, 0.3])
PENETRATION_WEIGHT = 10.0
MAX_TILT = np.radians(15.0)
MAX_OFFSET = 0.05
MAX_POINTS = 512
MAX_ITER = 200
XTOL = 1e-5
FTOL = 1e-10
INITIAL_STEP = 0.1
# relative loss gain below which the initialized parameters are kept
MIN_GAIN = 0.01
# revolute only: share of the loss above the rest floor a refinement must remove
MIN_EXCESS_SHARE = 0.15


def transform_points(points, axis, pivot, phi, prismatic: bool) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    axis = np.asarray(axis, dtype=float)
    if prismatic:
        return x + phi * axis
    pivot = np.asarray(pivot, dtype=float)
    return (x - pivot) @ rotation_about(axis, phi).T + pivot


def joint_transform(x, joint: JointEstimate, phi: float) -> np.ndarray:
    """Rotate about the joint line or translate along the axis by ``phi``."""
    return transform_points(x, joint.axis, joint.pivot, phi,
                            joint.joint_type is JointType.PRISMATIC)


def default_states(joint: JointEstimate, part_vertices=None) -> np.ndarray:
    if joint.joint_type.is_revolute:
        return REVOLUTE_STATES.copy()
    proj = np.asarray(part_vertices, dtype=float) @ joint.axis
    return PRISMATIC_FRACTIONS * float(proj.max() - proj.min())


def _skew_sign(v, pts):
    s = float(np.sum((pts @ v) ** 3))
    if abs(s) < 1e-30:
        v = v if v[np.argmax(np.abs(v))] >= 0 else -v
        return v
    return v if s > 0 else -v


def tangent_basis(axis, points) -> tuple:
    """Orthonormal pair spanning the plane normal to ``axis``.

    Directions come from the spread of ``points`` in that plane, so the basis
    moves with the geometry under rigid motions.
    """
    a = np.asarray(axis, dtype=float)
    c = np.asarray(points, dtype=float)
    c = c - c.mean(0)
    c = c - np.outer(c @ a, a)
    cand = []
    if len(c) >= 2:
        w, v = np.linalg.eigh(c.T @ c)
        # eigenvectors orthogonal to the axis carry the two largest eigenvalues
        order = np.argsort(-w)
        if w[order[1]] > 1e-18:
            cand = [v[:, k] for k in order if abs(v[:, k] @ a) < 0.5][:2]
    if len(cand) < 2:
        t = np.eye(3)[np.argmin(np.abs(a))]
        b1 = np.cross(a, t)
        b1 /= np.linalg.norm(b1)
        b2 = np.cross(a, b1)
        return b1, b2
    b1 = cand[0] - (cand[0] @ a) * a
    b1 /= np.linalg.norm(b1)
    b2 = cand[1] - (cand[1] @ a) * a - (cand[1] @ b1) * b1
    b2 /= np.linalg.norm(b2)
    return _skew_sign(b1, c), _skew_sign(b2, c)


@dataclass(eq=False)
class OptProblem:
    joint: JointEstimate
    contact: ContactInterface
    static_index: SpatialIndex
    states: np.ndarray
    penetration_weight: float = PENETRATION_WEIGHT
    max_tilt: float = MAX_TILT
    max_offset: float = MAX_OFFSET
    max_points: int = MAX_POINTS
    max_iter: int = MAX_ITER
    min_gain: float = MIN_GAIN
    min_excess_share: float = MIN_EXCESS_SHARE
    points: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        st = np.asarray(self.states, dtype=float).ravel()
        st = np.unique(st[st != 0.0])
        if len(st) < 4 or not (st.min() < 0 < st.max()):
            raise ValueError("states need at least 4 distinct non-zero values of both signs")
        self.states = st
        if self.penetration_weight < 1:
            raise ValueError("penetration_weight must be >= 1")
        if not 0.0 <= self.min_gain < 1.0:
            raise ValueError("min_gain must be in [0, 1)")
        if not 0.0 <= self.min_excess_share <= 1.0:
            raise ValueError("min_excess_share must be in [0, 1]")
        if self.joint.stage != "initialized":
            raise ValueError("optimization starts from an initialized estimate")
        pts = np.asarray(self.contact.points, dtype=float)
        if len(pts) == 0:
            raise ValueError("empty contact set")
        self.points = pts[np.sort(farthest_point_sample(pts, self.max_points))]

    @property
    def prismatic(self) -> bool:
        return self.joint.joint_type is JointType.PRISMATIC

    @property
    def n_params(self) -> int:
        return 2 if self.prismatic else 4


def trajectory_loss(problem: OptProblem, axis, pivot=None) -> float:
    """Sum over states and contact points of weighted squared signed distance."""
    pts = problem.points
    batch = np.concatenate([transform_points(pts, axis, pivot, phi, problem.prismatic)
                            for phi in problem.states])
    s = problem.static_index.signed_distance(batch)
    w = np.where(s < 0.0, problem.penetration_weight, 1.0)
    return float(np.sum(w * s * s))


def rest_floor(problem: OptProblem) -> float:
    """Loss left if every state kept each contact point at its rest distance.

    A correct hinge or spin slides its contacts along the static surface, so
    for revolute joints this is the part of the loss that is mesh noise.
    """
    s = problem.static_index.signed_distance(problem.points)
    w = np.where(s < 0.0, problem.penetration_weight, 1.0)
    return len(problem.states) * float(np.sum(w * s * s))


@dataclass(eq=False)
class OptResult:
    joint: JointEstimate
    initial_loss: float
    final_loss: float
    iterations: int
    converged: bool
    loss_trace: list
    params: np.ndarray = None
    trace: list = field(default_factory=list, repr=False)


class _Param:
    """Normalized box parameters in [-1, 1] to (axis, pivot)."""

    def __init__(self, problem: OptProblem):
        j = problem.joint
        self.a0 = j.axis
        self.p0 = j.pivot
        self.b1, self.b2 = tangent_basis(j.axis, problem.points)
        self.tilt = problem.max_tilt
        self.off = problem.max_offset
        self.prismatic = problem.prismatic

    def __call__(self, x):
        w = self.tilt * (x[0] * self.b1 + x[1] * self.b2)
        ang = float(np.linalg.norm(w))
        axis = self.a0 if ang == 0.0 else rotation_about(w / ang, ang) @ self.a0
        axis = axis / np.linalg.norm(axis)
        if self.prismatic:
            return axis, None
        pivot = self.p0 + self.off * (x[2] * self.b1 + x[3] * self.b2)
        return axis, pivot


def nelder_mead(f, x0, step=INITIAL_STEP, lo=-1.0, hi=1.0, max_iter=MAX_ITER,
                xtol=XTOL, ftol=FTOL, callback=None):
    """Box-clamped Nelder-Mead; stops when the simplex diameter or value spread is tiny.

    Returns (best x, best f, iterations, converged).
    """
    n = len(x0)
    clip = lambda x: np.clip(x, lo, hi)  # noqa: E731
    sim = [clip(np.asarray(x0, dtype=float))]
    for i in range(n):
        e = sim[0].copy()
        e[i] = e[i] + step if e[i] + step <= hi else e[i] - step
        sim.append(clip(e))
    sim = np.array(sim)
    fs = np.array([f(x) for x in sim])
    it = 0
    converged = False
    while it < max_iter:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        diam = float(np.max(np.linalg.norm(sim[1:] - sim[0], axis=1)))
        if diam < xtol or fs[-1] - fs[0] < ftol:
            converged = True
            break
        it += 1
        cen = sim[:-1].mean(0)
        xr = clip(cen + (cen - sim[-1]))
        fr = f(xr)
        if fr < fs[0]:
            xe = clip(cen + 2.0 * (cen - sim[-1]))
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
        elif fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
        else:
            if fr < fs[-1]:
                xc = clip(cen + 0.5 * (xr - cen))
                fc = f(xc)
                accept = fc <= fr
            else:
                xc = clip(cen + 0.5 * (sim[-1] - cen))
                fc = f(xc)
                accept = fc < fs[-1]
            if accept:
                sim[-1], fs[-1] = xc, fc
            else:
                for k in range(1, n + 1):
                    sim[k] = clip(sim[0] + 0.5 * (sim[k] - sim[0]))
                    fs[k] = f(sim[k])
        if callback is not None:
            k = int(np.argmin(fs))
            callback(it, sim[k], float(fs[k]))
    k = int(np.argmin(fs))
    return sim[k].copy(), float(fs[k]), it, converged


def optimize_joint(problem: OptProblem, trace_path=None) -> OptResult:
    param = _Param(problem)

    def loss(x):
        axis, pivot = param(x)
        v = trajectory_loss(problem, axis, pivot)
        if not np.isfinite(v):
            raise NonFiniteLoss("trajectory loss is not finite", stage="optimize",
                                part_id=problem.joint.part_id)
        return v

    x0 = np.zeros(problem.n_params)
    f0 = loss(x0)
    best = [f0]
    trace = [{"iteration": 0, "params": x0.tolist(), "loss": f0}]

    def cb(it, x, fx):
        best.append(min(best[-1], fx))
        axis, pivot = param(x)
        trace.append({"iteration": it, "params": x.tolist(), "loss": fx,
                      "axis": axis.tolist(), "pivot": None if pivot is None else pivot.tolist()})

    x, fx, iters, conv = nelder_mead(loss, x0, max_iter=problem.max_iter, callback=cb)
    # moves that the loss cannot tell apart from noise are not taken
    if not fx < f0 * (1.0 - problem.min_gain) or not fx < f0:
        x, fx = x0, f0
    elif not problem.prismatic and problem.min_excess_share > 0.0:
        excess = f0 - rest_floor(problem)
        if not (excess > 0.0 and f0 - fx >= problem.min_excess_share * excess):
            x, fx = x0, f0
    axis, pivot = param(x)
    if fx == f0 and not np.any(x):
        axis, pivot = problem.joint.axis, problem.joint.pivot
    joint = problem.joint.replace(axis=axis, pivot=pivot, stage="optimized")
    if trace_path is not None:
        p = Path(trace_path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text("".join(json.dumps(r) + "\n" for r in trace))
    return OptResult(joint, f0, fx, iters, conv, best, x, trace)
