"""Executability harness and joint / segmentation metrics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .asset import ArticulationTree, JointEstimate, JointType
from .contact import TAU
from .errors import LengthMismatch, MissingPivotError
from .geom import SpatialIndex, TriMesh, farthest_point_sample, merge_meshes
from .trajopt import joint_transform

PENETRATION_DEPTH = 0.005
PENETRATION_FRACTION = 0.01
FREEZE_ANGLE = np.radians(5.0)
FREEZE_TRAVEL = 0.01
SAMPLES_PER_JOINT = 24
MAX_CHECK_VERTICES = 4096


@dataclass(frozen=True)
class JointVerdict:
    part_id: str
    verdict: str
    mode: Optional[str] = None
    evidence: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"part_id": self.part_id, "verdict": self.verdict, "mode": self.mode,
                "evidence": self.evidence}


@dataclass(frozen=True)
class ExecutabilityReport:
    joints: tuple

    @property
    def passed(self) -> bool:
        return all(j.passed for j in self.joints)

    def __getitem__(self, part_id) -> JointVerdict:
        for j in self.joints:
            if j.part_id == part_id:
                return j
        raise KeyError(part_id)

    def to_dict(self) -> dict:
        return {"verdict": "pass" if self.passed else "fail",
                "joints": [j.to_dict() for j in self.joints]}

    def table(self) -> str:
        rows = [f"{'part':<16} {'verdict':<8} {'mode':<12} evidence"]
        for j in self.joints:
            ev = ", ".join(f"{k}={_short(v)}" for k, v in j.evidence.items())
            rows.append(f"{j.part_id:<16} {j.verdict:<8} {j.mode or '-':<12} {ev}")
        rows.append(f"asset: {'pass' if self.passed else 'fail'}")
        return "\n".join(rows)


def _short(v):
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def _check_vertices(mesh: TriMesh, limit=MAX_CHECK_VERTICES) -> np.ndarray:
    v = mesh.vertices
    if len(v) <= limit:
        return v
    return v[np.sort(farthest_point_sample(v, limit))]


def check_joint(joint: JointEstimate, moving: TriMesh, static, parent=None,
                samples: int = SAMPLES_PER_JOINT, contact_tau: float = TAU) -> JointVerdict:
    """Actuate one joint across its limits and classify the first failure found."""
    if samples < 10:
        raise ValueError("samples_per_joint must be >= 10")
    if joint.limits is None:
        raise ValueError(f"joint {joint.part_id!r} has no limits")
    lo, hi = joint.limits
    prismatic = joint.joint_type is JointType.PRISMATIC
    span = hi - lo
    if span < (FREEZE_TRAVEL if prismatic else FREEZE_ANGLE):
        return JointVerdict(joint.part_id, "fail", "freezing", {"range": float(span)})
    static = static if isinstance(static, SpatialIndex) else SpatialIndex(static)
    pts = _check_vertices(moving)
    # samples + 1 evenly spaced poses; doubling ``samples`` keeps every old pose
    poses = lo + span * (np.arange(samples + 1) / samples)
    poses[-1] = hi
    worst = (0.0, None)
    for phi in poses:
        s = static.signed_distance(joint_transform(pts, joint, float(phi)))
        frac = float(np.mean(s < -PENETRATION_DEPTH))
        if frac > worst[0]:
            worst = (frac, float(phi))
        if frac > PENETRATION_FRACTION:
            return JointVerdict(joint.part_id, "fail", "penetration",
                                {"pose": float(phi), "penetration_fraction": frac})
    if prismatic:
        par = static if parent is None else (parent if isinstance(parent, SpatialIndex)
                                             else SpatialIndex(parent))
        for phi in poses[1:-1]:
            n = int(np.count_nonzero(par.distance(joint_transform(moving.vertices, joint,
                                                                  float(phi))) < contact_tau))
            if n == 0:
                return JointVerdict(joint.part_id, "fail", "detachment",
                                    {"pose": float(phi), "contact_count": 0})
    ev = {"max_penetration_fraction": worst[0]}
    if worst[1] is not None:
        ev["worst_pose"] = worst[1]
    return JointVerdict(joint.part_id, "pass", None, ev)


def check_executability(tree: ArticulationTree, joints, samples_per_joint: int = SAMPLES_PER_JOINT,
                        contact_tau: float = TAU) -> ExecutabilityReport:
    """One verdict per movable joint; each part moves alone against everything outside its subtree."""
    by_id = {j.part_id: j for j in joints}
    out = []
    for pid in tree.movable():
        j = by_id.get(pid)
        if j is None or j.limits is None:
            out.append(JointVerdict(pid, "fail", "freezing", {"reason": "no limits"}))
            continue
        static = merge_meshes([tree[i].mesh for i in tree.outside_subtree(pid)])
        out.append(check_joint(j, tree[pid].mesh, static, tree[tree[pid].parent_id].mesh,
                               samples_per_joint, contact_tau))
    return ExecutabilityReport(tuple(out))


# -- metrics ---------------------------------------------------------------------

@dataclass(frozen=True)
class JointErrorMetrics:
    type_error: int
    fine_type_error: int
    axis_error: float
    axis_error_undirected: float
    pivot_error: Optional[float] = None
    pivot_error_point: Optional[float] = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def joint_errors(pred: JointEstimate, gt: JointEstimate) -> JointErrorMetrics:
    """Type, axis and pivot errors; pivot error is the distance to the GT axis line."""
    te = int(pred.joint_type.coarse != gt.joint_type.coarse)
    fte = int(pred.joint_type is not gt.joint_type)
    c = float(np.clip(pred.axis @ gt.axis, -1.0, 1.0))
    ax = float(np.arccos(c))
    und = float(np.arccos(min(1.0, abs(c))))
    pe = pp = None
    if gt.joint_type.is_revolute and pred.joint_type.is_revolute:
        if pred.pivot is None or gt.pivot is None:
            raise MissingPivotError(f"revolute joint {pred.part_id!r} lacks a pivot",
                                    part_id=pred.part_id)
        d = pred.pivot - gt.pivot
        pe = float(np.linalg.norm(d - (d @ gt.axis) * gt.axis))
        pp = float(np.linalg.norm(d))
    return JointErrorMetrics(te, fte, ax, und, pe, pp)


@dataclass(frozen=True)
class SegmentationMetrics:
    miou: float
    count_acc: int
    matches: dict

    def to_dict(self) -> dict:
        return {"mIoU": self.miou, "count_acc": self.count_acc, "matches": self.matches}


def iou_matrix(pred, gt, pred_ids, gt_ids) -> np.ndarray:
    m = np.zeros((len(gt_ids), len(pred_ids)))
    for i, g in enumerate(gt_ids):
        gm = gt == g
        for j, p in enumerate(pred_ids):
            pm = pred == p
            union = np.count_nonzero(gm | pm)
            m[i, j] = np.count_nonzero(gm & pm) / union if union else 0.0
    return m


def segmentation_metrics(pred_labels, gt_labels, static_pred=(), static_gt=()) -> SegmentationMetrics:
    """mIoU over GT movable parts under the optimal one-to-one matching.

    Labels listed in ``static_*`` (the fixed body) are excluded from matching.
    """
    pred = np.asarray(pred_labels)
    gt = np.asarray(gt_labels)
    if pred.shape != gt.shape:
        raise LengthMismatch(f"label arrays differ in length: {pred.shape} vs {gt.shape}")
    sp, sg = set(static_pred), set(static_gt)
    pred_ids = sorted(x for x in set(pred.tolist()) if x not in sp)
    gt_ids = sorted(x for x in set(gt.tolist()) if x not in sg)
    count = int(len(pred_ids) == len(gt_ids))
    if not gt_ids:
        return SegmentationMetrics(1.0 if not pred_ids else 0.0, count, {})
    if not pred_ids:
        return SegmentationMetrics(0.0, count, {})
    m = iou_matrix(pred, gt, pred_ids, gt_ids)
    r, c = linear_sum_assignment(m, maximize=True)
    matches = {str(gt_ids[i]): (str(pred_ids[j]), float(m[i, j])) for i, j in zip(r, c)}
    return SegmentationMetrics(float(m[r, c].sum() / len(gt_ids)), count, matches)
