"""Stage orchestration: contact, init, optimize, limits, export, check, eval.

Every stage reads and writes plain JSON/PLY under one output directory, so the
stages can run one at a time from the command line or back to back.
"""
from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import synth
from .asset import (ArticulationTree, JointEstimate, JointType, load_decomposition,
                    load_joints, load_part_meshes, resolve_tree, save_joints)
from .contact import dump_contact, extract_contact_escalating, load_contact
from .errors import ArticulationError
from .evaluate import (SAMPLES_PER_JOINT, ExecutabilityReport, check_executability,
                       joint_errors, segmentation_metrics)
from .finalize import LimitSweepConfig, emit_urdf, estimate_limits
from .geom import SpatialIndex, merge_meshes
from .joint_init import default_steps, initialize, write_init_diagnostics
from .trajopt import OptProblem, optimize_joint

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    tau: float = 0.01
    delta: float = 0.005
    eps_c: float = 0.005
    omega: float = 20.0
    ransac_iterations: int = 1000
    min_inlier_ratio: float = 0.3
    seed: int = 0
    revolute_states_deg: tuple = (-30.0, -20.0, -10.0, 10.0, 20.0, 30.0)
    prismatic_fractions: tuple = (-0.3, -0.2, -0.1, 0.1, 0.2, 0.3)
    prismatic_init_fractions: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    penetration_weight: float = 10.0
    max_points: int = 512
    max_iter: int = 200
    min_gain: float = 0.01
    min_excess_share: float = 0.15
    angular_step_deg: float = 1.0
    linear_step: float = 0.005
    samples_per_joint: int = SAMPLES_PER_JOINT
    static_env: str = "outside_subtree"
    skip_optimization: bool = False
    tree_service: Optional[str] = None
    service_timeout: float = 30.0
    out: Optional[str] = None

    def __post_init__(self):
        if self.static_env not in ("outside_subtree", "parent"):
            raise ValueError("static_env must be 'outside_subtree' or 'parent'")
        for k in ("tau", "delta", "eps_c", "omega", "linear_step", "angular_step_deg"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        self.revolute_states_deg = tuple(float(x) for x in self.revolute_states_deg)
        self.prismatic_fractions = tuple(float(x) for x in self.prismatic_fractions)
        self.prismatic_init_fractions = tuple(float(x) for x in self.prismatic_init_fractions)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        d = json.loads(Path(path).read_text())
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def merged(self, **overrides) -> "PipelineConfig":
        return dataclasses.replace(self, **{k: v for k, v in overrides.items() if v is not None})

    @property
    def sweep(self) -> LimitSweepConfig:
        return LimitSweepConfig(np.radians(self.angular_step_deg), self.linear_step,
                                contact_tau=self.tau)


def _dump(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")


def load_tree(manifest, cfg: PipelineConfig) -> ArticulationTree:
    if cfg.tree_service:
        return resolve_tree(load_part_meshes(manifest), cfg.tree_service, manifest,
                            cfg.service_timeout, cfg.tau)
    return load_decomposition(manifest)


def static_parts(tree: ArticulationTree, pid: str, cfg: PipelineConfig) -> list:
    if cfg.static_env == "parent":
        return [tree[pid].parent_id]
    return tree.outside_subtree(pid)


def _tagged(e: ArticulationError, stage: str, pid: Optional[str]):
    if getattr(e, "stage", None) is None:
        e.stage = stage
    if getattr(e, "part_id", None) is None:
        e.part_id = pid
    return e


# -- stages ------------------------------------------------------------------------

def stage_contact(tree: ArticulationTree, cfg: PipelineConfig, out=None) -> dict:
    contacts, meta = {}, {}
    for pid in tree.movable():
        part = tree[pid]
        try:
            c = extract_contact_escalating(part.mesh, tree[part.parent_id].mesh, cfg.tau, pid)
        except ArticulationError as e:
            raise _tagged(e, "contact", pid)
        contacts[pid] = c
        meta[pid] = {"tau": c.tau, "n_points": len(c)}
        if out is not None:
            dump_contact(c, Path(out) / "contact")
    if out is not None:
        _dump(meta, Path(out) / "contact.json")
    return contacts


def load_contacts(out) -> dict:
    out = Path(out)
    meta = json.loads((out / "contact.json").read_text())
    return {pid: load_contact(out / "contact" / f"contact_{pid}.ply", pid, m["tau"])
            for pid, m in meta.items()}


def stage_init(tree: ArticulationTree, contacts: dict, cfg: PipelineConfig, out=None):
    joints, records = {}, {}
    for pid in tree.movable():
        part = tree[pid]
        parent = SpatialIndex(tree[part.parent_id].mesh)
        steps = None
        if part.joint_type is JointType.PRISMATIC:
            steps = default_steps(part.mesh, fractions=cfg.prismatic_init_fractions)
        try:
            est, rec = initialize(part.joint_type, part.mesh, parent, contacts[pid], cfg.delta,
                                  cfg.ransac_iterations, cfg.seed, cfg.min_inlier_ratio,
                                  cfg.omega, cfg.eps_c, steps)
        except ArticulationError as e:
            raise _tagged(e, "init", pid)
        joints[pid], records[pid] = est, rec
        if out is not None:
            write_init_diagnostics(Path(out) / "init", pid, rec)
    if out is not None:
        save_joints(list(joints.values()), Path(out) / "init_joints.json")
    return joints, records


def _states(est: JointEstimate, part_mesh, cfg: PipelineConfig) -> np.ndarray:
    if est.joint_type.is_revolute:
        return np.radians(cfg.revolute_states_deg)
    proj = part_mesh.vertices @ est.axis
    return np.asarray(cfg.prismatic_fractions) * float(proj.max() - proj.min())


def stage_optimize(tree: ArticulationTree, contacts: dict, inits: dict, cfg: PipelineConfig,
                   out=None):
    joints, summary = {}, {}
    for pid in tree.movable():
        est = inits[pid]
        if cfg.skip_optimization:
            joints[pid] = est
            summary[pid] = {"skipped": True}
            continue
        static = SpatialIndex(merge_meshes([tree[i].mesh for i in static_parts(tree, pid, cfg)]))
        try:
            prob = OptProblem(est, contacts[pid], static, _states(est, tree[pid].mesh, cfg),
                              cfg.penetration_weight, max_points=cfg.max_points,
                              max_iter=cfg.max_iter, min_gain=cfg.min_gain,
                              min_excess_share=cfg.min_excess_share)
            res = optimize_joint(prob, None if out is None
                                 else Path(out) / "opt" / f"opt_{pid}.jsonl")
        except ArticulationError as e:
            raise _tagged(e, "optimize", pid)
        joints[pid] = res.joint
        summary[pid] = {"initial_loss": res.initial_loss, "final_loss": res.final_loss,
                        "iterations": res.iterations, "converged": res.converged,
                        "accepted": bool(np.any(res.params != 0.0))}
    if out is not None:
        save_joints(list(joints.values()), Path(out) / "opt_joints.json")
        _dump(summary, Path(out) / "opt.json")
    return joints, summary


def stage_limits(tree: ArticulationTree, joints: dict, cfg: PipelineConfig, out=None):
    """Sweep limits on ``tree`` (pass the clean tree for noisy inputs)."""
    done, records = {}, {}
    for pid in tree.movable():
        part = tree[pid]
        static = SpatialIndex(merge_meshes([tree[i].mesh for i in static_parts(tree, pid, cfg)]))
        parent = SpatialIndex(tree[part.parent_id].mesh)
        j = joints[pid].replace(limits=None)
        try:
            sw = estimate_limits(j, part.mesh, static, None, cfg.sweep, parent)
        except ArticulationError as e:
            raise _tagged(e, "limits", pid)
        done[pid] = j.replace(axis=sw.axis, limits=sw.limits)
        records[pid] = {"status": sw.status, "limits": list(sw.limits), "evidence": sw.evidence}
    if out is not None:
        save_joints(list(done.values()), Path(out) / "joints.json")
        _dump(records, Path(out) / "limits.json")
    return done, records


def stage_export(tree: ArticulationTree, joints: dict, contacts: dict, cfg: PipelineConfig, out,
                 name: str = "asset"):
    return emit_urdf(tree, list(joints.values()), out, contacts, name=name, tau=cfg.tau)


def stage_check(tree: ArticulationTree, joints: dict, cfg: PipelineConfig,
                out=None) -> ExecutabilityReport:
    rep = check_executability(tree, list(joints.values()), cfg.samples_per_joint, cfg.tau)
    if out is not None:
        _dump(rep.to_dict(), Path(out) / "executability.json")
    return rep


# -- end to end ----------------------------------------------------------------------

@dataclass
class PipelineResult:
    exit_code: int
    joints: dict
    report: ExecutabilityReport
    out: Optional[Path] = None
    diagnostics: dict = field(default_factory=dict)


def _report_doc(cfg, rep, joints, diag) -> dict:
    c = cfg.to_dict()
    c.pop("out", None)
    return {"verdict": "pass" if rep.passed else "fail",
            "executability": rep.to_dict()["joints"],
            "joints": [j.to_dict() for j in joints.values()],
            "stages": diag, "config": c}


def report_doc_from_files(cfg, rep, joints, out) -> dict:
    """Report assembled from the persisted stage records under ``out``."""
    out = Path(out)
    init = {pid: json.loads((out / "init" / f"init_{pid}.json").read_text()) for pid in joints}
    diag = {"init": init,
            "optimize": json.loads((out / "opt.json").read_text()),
            "limits": json.loads((out / "limits.json").read_text())}
    return _report_doc(cfg, rep, joints, diag)


def run_pipeline(cfg: PipelineConfig, manifest, physics_manifest=None,
                 name: Optional[str] = None) -> PipelineResult:
    """contact -> init -> optimize -> limits -> export -> check.

    ``physics_manifest`` supplies the meshes used for limit sweeps and the
    executability check (same parts and topology); by default the input itself.
    """
    out = None if cfg.out is None else Path(cfg.out)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    tree = load_tree(manifest, cfg)
    phys = tree if physics_manifest is None else load_decomposition(physics_manifest)
    if phys.topology() != tree.topology():
        raise ArticulationError("physics manifest topology differs from the input tree",
                                stage="limits")
    contacts = stage_contact(tree, cfg, out)
    inits, init_rec = stage_init(tree, contacts, cfg, out)
    opt, opt_sum = stage_optimize(tree, contacts, inits, cfg, out)
    joints, lim_rec = stage_limits(phys, opt, cfg, out)
    if out is not None:
        stage_export(tree, joints, contacts, cfg, out, name or Path(manifest).parent.name)
        write_labels(tree, out)
    rep = stage_check(phys, joints, cfg, out)
    diag = {"init": init_rec, "optimize": opt_sum, "limits": lim_rec}
    if out is not None:
        _dump(report_doc_from_files(cfg, rep, joints, out), out / "report.json")
    return PipelineResult(0 if rep.passed else 1, joints, rep, out, diag)


# -- evaluation ----------------------------------------------------------------------

def _flip_limits(limits, sign):
    if limits is None or sign > 0:
        return limits
    return (-limits[1], -limits[0])


def evaluate_joints(pred: dict, gt: list) -> list:
    rows = []
    for g in gt:
        p = pred.get(g.part_id)
        if p is None:
            rows.append({"part_id": g.part_id, "missing": True})
            continue
        m = joint_errors(p, g)
        row = {"part_id": g.part_id, "type": g.joint_type.value, **m.to_dict()}
        if p.limits is not None and g.limits is not None:
            lim = _flip_limits(p.limits, np.sign(p.axis @ g.axis) or 1.0)
            row["limits"] = list(lim)
            row["gt_limits"] = list(g.limits)
        rows.append(row)
    return rows


def run_eval(pred_dirs, gt_dirs) -> dict:
    """Aggregate metrics of pipeline outputs against synth ground truth directories."""
    assets = []
    for pd, gd in zip(pred_dirs, gt_dirs):
        pd, gd = Path(pd), Path(gd)
        pred = {j.part_id: j for j in load_joints(pd / "joints.json")}
        gt = synth.load_gt(gd / "gt.json")
        rows = evaluate_joints(pred, gt)
        extra = sorted(set(pred) - {g.part_id for g in gt})
        rep = json.loads((pd / "report.json").read_text()) if (pd / "report.json").exists() \
            else None
        seg = None
        if (pd / "labels.json").exists() and (gd / "labels.json").exists():
            pl = json.loads((pd / "labels.json").read_text())
            gl = json.loads((gd / "labels.json").read_text())
            seg = segmentation_metrics(pl["labels"], gl["labels"], pl["static"], gl["static"])
        assets.append({"pred": str(pd), "gt": str(gd), "joints": rows,
                       "unmatched_pred_parts": extra,
                       "executable": None if rep is None else rep["verdict"] == "pass",
                       "mIoU": None if seg is None else seg.miou,
                       "count_acc": None if seg is None else seg.count_acc})
    return {"aggregate": aggregate(assets), "assets": assets}


def aggregate(assets) -> dict:
    rows = [r for a in assets for r in a["joints"] if not r.get("missing")]
    miss = sum(1 for a in assets for r in a["joints"] if r.get("missing"))

    def stat(key):
        v = [r[key] for r in rows if r.get(key) is not None]
        return {"mean": float(np.mean(v)), "max": float(np.max(v)), "n": len(v)} if v else None

    ex = [a["executable"] for a in assets if a["executable"] is not None]
    mi = [a["mIoU"] for a in assets if a["mIoU"] is not None]
    ca = [a["count_acc"] for a in assets if a["count_acc"] is not None]
    return {"type_err": stat("type_error"), "fine_type_err": stat("fine_type_error"),
            "axis_err": stat("axis_error_undirected"), "axis_err_directed": stat("axis_error"),
            "pivot_err": stat("pivot_error"), "pivot_err_point": stat("pivot_error_point"),
            "executability": float(np.mean(ex)) if ex else None,
            "mIoU": float(np.mean(mi)) if mi else None,
            "count_acc": float(np.mean(ca)) if ca else None,
            "missing_joints": miss, "n_assets": len(assets)}


def write_labels(tree: ArticulationTree, out):
    path = Path(out) / "labels.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(synth.part_labels(tree)) + "\n")
