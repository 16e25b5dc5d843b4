"""Procedural articulated objects with analytically known joints.

All movable parts ride on clearance fits: barrel hinges (a pin on the parent
inside a knuckle tube on the child) or railed slots, with a fixed radial or
side clearance of ``CLEARANCE``. The contact interface is therefore the
rotationally symmetric inner knuckle surface or the drawer body, and the
ground-truth joint sits exactly at the minimum of the trajectory loss.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .asset import ArticulationTree, JointEstimate, JointType, Part, save_decomposition
from .errors import InvalidSpecError
from .geom import RigidTransform, merge_meshes
from .geom.primitives import box, chamfered_rect, cylinder, frame_along, prism, tube

CLEARANCE = 0.004
PIN_RADIUS = 0.008
KNUCKLE_WALL = 0.012
WALL = 0.02
MESH_H = 0.02
CHAMFER = 0.012
FLOAT_GAP = 0.012
# dense side rows so the shallow contact band carries enough points
SPIN_SEGMENTS = 128
SPIN_ROW = 0.003

TEMPLATES = ("drawer_cabinet", "hinged_door", "spin_knob", "laptop", "multi_drawer", "lamp")

# (lo, hi) ranges drawn from the seed when a dimension is not given
DIMENSION_RANGES = {
    "drawer_cabinet": {"depth": (0.30, 0.45), "width": (0.18, 0.24), "height": (0.08, 0.12)},
    "multi_drawer": {"depth": (0.30, 0.42), "width": (0.18, 0.24), "height": (0.08, 0.11)},
    "hinged_door": {"length": (0.30, 0.45), "height": (0.40, 0.60), "thickness": (0.014, 0.02),
                    "stop_angle": (np.radians(80.0), np.radians(115.0)),
                    "back_stop": (np.radians(8.0), np.radians(15.0))},
    "spin_knob": {"radius": (0.04, 0.06), "knob_height": (0.03, 0.05),
                  "collar_height": (0.014, 0.018), "plate": (0.09, 0.12)},
    "laptop": {"width": (0.25, 0.35), "lid_length": (0.18, 0.26), "lid_thickness": (0.010, 0.016),
               "base_thickness": (0.015, 0.025)},
    "lamp": {"lower_arm": (0.22, 0.30), "upper_arm": (0.20, 0.28), "head_radius": (0.018, 0.025)},
}


@dataclass(frozen=True)
class Noise:
    vertex_jitter_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_extent: float = 0.025

    @property
    def is_zero(self) -> bool:
        return self.vertex_jitter_sigma == 0.0 and self.outlier_fraction == 0.0


@dataclass(frozen=True, eq=False)
class TemplateSpec:
    template: str
    dimensions: dict = field(default_factory=dict)
    pose: Optional[RigidTransform] = None
    noise: Noise = Noise()
    seed: int = 0

    def validate(self):
        if self.template not in TEMPLATES:
            raise InvalidSpecError(f"unknown template {self.template!r}; choose from {TEMPLATES}")
        unknown = set(self.dimensions) - set(DIMENSION_RANGES[self.template])
        if unknown:
            raise InvalidSpecError(f"unknown dimension(s) for {self.template}: {sorted(unknown)}")
        for k, v in self.dimensions.items():
            if not float(v) > 0:
                raise InvalidSpecError(f"dimension {k} must be positive, got {v}")
        n = self.noise
        if n.vertex_jitter_sigma < 0 or n.outlier_fraction < 0 or n.outlier_extent < 0:
            raise InvalidSpecError("noise parameters must be non-negative")
        if n.outlier_fraction > 0.5:
            raise InvalidSpecError("outlier_fraction must be at most 0.5")


@dataclass(eq=False)
class GroundTruthAsset:
    tree: ArticulationTree
    gt_joints: list
    dimensions: dict
    manifest_path: Optional[Path] = None
    clean_tree: Optional[ArticulationTree] = None
    clean_manifest_path: Optional[Path] = None

    def gt(self, part_id) -> JointEstimate:
        return next(j for j in self.gt_joints if j.part_id == part_id)


# -- geometry helpers ------------------------------------------------------------

def _stop_angle(length, half_thickness, gap):
    """Extra rotation until a slab's far corner closes a parallel gap.

    Solves length*sin(p) + half_thickness*cos(p) = half_thickness + gap.
    """
    rho = np.hypot(length, half_thickness)
    return float(np.arcsin((half_thickness + gap) / rho) - np.arctan2(half_thickness, length))


def _rot_z(angle) -> RigidTransform:
    return RigidTransform.from_axis_angle([0.0, 0.0, 1.0], angle)


def _pin_and_knuckle(z0, z1, pin_z0, pin_z1, transform=None, segments=64):
    r_in = PIN_RADIUS + CLEARANCE
    pin = cylinder(PIN_RADIUS, pin_z0, pin_z1, segments, transform=transform)
    knuckle = tube(r_in, r_in + KNUCKLE_WALL, z0, z1, segments, transform=transform)
    return pin, knuckle


def _drawer_bay(depth, width, height, zc, g=CLEARANCE, t=WALL, h=MESH_H):
    """Drawer box sliding along +x and the panels of its bay (minus shared shelves)."""
    # chamfered long edges: no drawer vertex sits near two cabinet walls at once
    drawer = prism(chamfered_rect(width / 2, height / 2, CHAMFER, (0.0, zc)), -depth, 0.0, h)
    zlo, zhi = zc - height / 2 - g, zc + height / 2 + g
    yin = width / 2 + g
    xb = -depth - g
    panels = [
        box([xb - t, -yin - t, zlo], [xb, yin + t, zhi], h),          # back
        box([xb, yin, zlo], [0.0, yin + t, zhi], h),                  # sides
        box([xb, -yin - t, zlo], [0.0, -yin, zhi], h),
    ]
    return drawer, panels, (zlo, zhi), yin, xb


def _drawer_cabinet(d):
    drawer, panels, (zlo, zhi), yin, xb = _drawer_bay(d["depth"], d["width"], d["height"], 0.0)
    t = WALL
    panels += [box([xb - t, -yin - t, zlo - t], [0.0, yin + t, zlo], MESH_H),
               box([xb - t, -yin - t, zhi], [0.0, yin + t, zhi + t], MESH_H)]
    parts = [("cabinet", merge_meshes(panels), None, JointType.FIXED),
             ("drawer", drawer, "cabinet", JointType.PRISMATIC)]
    gt = [JointEstimate("drawer", JointType.PRISMATIC, [1.0, 0.0, 0.0], None,
                        (0.0, d["depth"]), "optimized")]
    return parts, gt


def _multi_drawer(d, rng):
    heights = d["height"] * np.array([1.0, 0.85, 1.15])
    t = WALL
    g = CLEARANCE
    panels = []
    drawers = []
    z = 0.0
    zc = []
    for k, hk in enumerate(heights):
        c = z + g + hk / 2
        dr, pan, (zlo, zhi), yin, xb = _drawer_bay(d["depth"], d["width"], hk, c)
        drawers.append(dr)
        panels += pan
        panels.append(box([xb - t, -yin - t, zlo - t], [0.0, yin + t, zlo], MESH_H))
        zc.append(c)
        z = zhi + t
    panels.append(box([xb - t, -yin - t, z - t], [0.0, yin + t, z], MESH_H))
    parts = [("cabinet", merge_meshes(panels), None, JointType.FIXED)]
    gt = []
    for k, dr in enumerate(drawers):
        parts.append((f"drawer_{k}", dr, "cabinet", JointType.PRISMATIC))
        gt.append(JointEstimate(f"drawer_{k}", JointType.PRISMATIC, [1.0, 0.0, 0.0], None,
                                (0.0, d["depth"]), "optimized"))
    return parts, gt


def _hinged_door(d):
    L, H, tp = d["length"], d["height"], d["thickness"]
    alpha, beta = d["stop_angle"], d["back_stop"]
    g = CLEARANCE
    pin, knuckle = _pin_and_knuckle(0.0, H, -0.03, H + 0.03)
    panel = box([0.02, -tp / 2, 0.0], [L, tp / 2, H], MESH_H)
    brackets = [box([-0.07, -0.02, -0.05], [0.02, 0.02, -0.03], MESH_H),
                box([-0.07, -0.02, H + 0.03], [0.02, 0.02, H + 0.05], MESH_H),
                box([-0.07, -0.02, -0.03], [-0.05, 0.02, H + 0.03], MESH_H)]
    v0 = tp / 2 + g
    wall = box([0.05, v0, 0.0], [L + 0.03, v0 + WALL, H], MESH_H, transform=_rot_z(alpha))
    block = box([0.6 * L, -v0 - WALL, 0.0], [L + 0.03, -v0, H], MESH_H,
                transform=_rot_z(-beta))
    frame = merge_meshes([pin] + brackets + [wall, block])
    door = merge_meshes([knuckle, panel])
    phi = _stop_angle(L, tp / 2, g)
    parts = [("frame", frame, None, JointType.FIXED), ("door", door, "frame", JointType.HINGE)]
    gt = [JointEstimate("door", JointType.HINGE, [0.0, 0.0, 1.0], [0.0, 0.0, H / 2],
                        (-(beta + phi), alpha + phi), "optimized")]
    return parts, gt


def _spin_knob(d):
    r, hk, hc, pw = d["radius"], d["knob_height"], d["collar_height"], d["plate"]
    g = CLEARANCE
    plate = box([-pw, -pw, -0.02], [pw, pw, 0.0], MESH_H)
    # the knob floats FLOAT_GAP above the plate, so only the collar bore touches it
    collar = tube(r + g, r + g + KNUCKLE_WALL, 0.0, hc, SPIN_SEGMENTS)
    knob = cylinder(r, FLOAT_GAP, FLOAT_GAP + hk, SPIN_SEGMENTS, h=SPIN_ROW, fan_caps=True)
    parts = [("plate", merge_meshes([plate, collar]), None, JointType.FIXED),
             ("knob", knob, "plate", JointType.SPIN)]
    gt = [JointEstimate("knob", JointType.SPIN, [0.0, 0.0, 1.0], [0.0, 0.0, FLOAT_GAP],
                        (-np.pi, np.pi), "optimized")]
    return parts, gt


def _laptop(d):
    W, Hl, Tl, Tb = d["width"], d["lid_length"], d["lid_thickness"], d["base_thickness"]
    g = CLEARANCE
    a = W / 2
    along_x = frame_along([1.0, 0.0, 0.0])
    # frame_along maps +z to +x; local z ranges below are positions along x
    pin, knuckle = _pin_and_knuckle(-a, a, -a - 0.03, a + 0.03, transform=along_x)
    top = -(g + Tl / 2)
    depth = Hl + 0.05
    base = box([-a - 0.05, -depth, top - Tb], [a + 0.05, -0.036, top], MESH_H)
    blocks = [box([s0, -0.04, top], [s1, 0.02, 0.02], MESH_H)
              for s0, s1 in ((-a - 0.05, -a - 0.03), (a + 0.03, a + 0.05))]
    lid = box([-a, -Tl / 2, 0.02], [a, Tl / 2, Hl], MESH_H)
    parts = [("base", merge_meshes([base, pin] + blocks), None, JointType.FIXED),
             ("lid", merge_meshes([knuckle, lid]), "base", JointType.HINGE)]
    phi = _stop_angle(Hl, Tl / 2, g)
    gt = [JointEstimate("lid", JointType.HINGE, [1.0, 0.0, 0.0], [0.0, 0.0, 0.0],
                        (-np.pi, np.pi / 2 + phi), "optimized")]
    return parts, gt


def _lamp(d):
    """Base, two arms on barrel hinges about +y, and a spinning head."""
    g = CLEARANCE
    l1, l2, rh = d["lower_arm"], d["upper_arm"], d["head_radius"]
    along_y = lambda z: RigidTransform(frame_along([0.0, 1.0, 0.0]).rotation, [0.0, 0.0, z])  # noqa: E731
    half = 0.03
    z1 = 0.06
    z2 = z1 + l1
    plate = box([-0.12, -0.12, -0.02], [0.12, 0.12, 0.0], MESH_H)
    pin1, kn1 = _pin_and_knuckle(-half, half, -half - 0.03, half + 0.03, along_y(z1))
    # frame_along([0,1,0]) maps local +z to world +y; knuckle spans y in [-half, half]
    posts = [box([-0.02, s0, 0.0], [0.02, s1, z1 + 0.02], MESH_H)
             for s0, s1 in ((-half - 0.05, -half - 0.03), (half + 0.03, half + 0.05))]
    base = merge_meshes([plate, pin1] + posts)

    slab1 = box([-0.01, -half, z1 + 0.02], [0.01, half, z2 - 0.05], MESH_H)
    pin2, kn2 = _pin_and_knuckle(-half, half, -half - 0.03, half + 0.03, along_y(z2))
    cross = box([-0.01, -half - 0.05, z2 - 0.06], [0.01, half + 0.05, z2 - 0.04], MESH_H)
    forks = [box([-0.02, s0, z2 - 0.04], [0.02, s1, z2 + 0.02], MESH_H)
             for s0, s1 in ((-half - 0.05, -half - 0.03), (half + 0.03, half + 0.05))]
    lower = merge_meshes([kn1, slab1, pin2, cross] + forks)

    xh = l2
    arm = box([0.02, -half, z2 - 0.01], [xh + rh + 0.03, half, z2 + 0.01], MESH_H)
    zb = z2 - 0.01
    hc = 0.025
    collar = tube(rh + g, rh + g + KNUCKLE_WALL, zb - hc, zb, 64,
                  transform=RigidTransform(np.eye(3), [xh, 0.0, 0.0]))
    upper = merge_meshes([kn2, arm, collar])
    zt = zb - FLOAT_GAP
    head = cylinder(rh, zt - 0.04, zt, 64,
                    transform=RigidTransform(np.eye(3), [xh, 0.0, 0.0]), fan_caps=True)
    parts = [("base", base, None, JointType.FIXED),
             ("arm_lower", lower, "base", JointType.HINGE),
             ("arm_upper", upper, "arm_lower", JointType.HINGE),
             ("head", head, "arm_upper", JointType.SPIN)]
    gt = [JointEstimate("arm_lower", JointType.HINGE, [0.0, 1.0, 0.0], [0.0, 0.0, z1],
                        None, "optimized"),
          JointEstimate("arm_upper", JointType.HINGE, [0.0, 1.0, 0.0], [0.0, 0.0, z2],
                        None, "optimized"),
          JointEstimate("head", JointType.SPIN, [0.0, 0.0, 1.0], [xh, 0.0, zt],
                        (-np.pi, np.pi), "optimized")]
    return parts, gt


# -- generation ------------------------------------------------------------------

def draw_dimensions(template, seed, given=None) -> dict:
    rng = np.random.default_rng([seed, TEMPLATES.index(template)])
    dims = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in DIMENSION_RANGES[template].items()}
    dims.update({k: float(v) for k, v in (given or {}).items()})
    return dims


def random_pose(seed) -> RigidTransform:
    rng = np.random.default_rng([seed, 7919])
    r = Rotation.random(random_state=rng).as_matrix()
    return RigidTransform(r, rng.uniform(-0.5, 0.5, 3))


def _map_joint(j: JointEstimate, pose: RigidTransform) -> JointEstimate:
    pivot = None if j.pivot is None else pose.apply(j.pivot)
    return j.replace(axis=pose.apply_vector(j.axis), pivot=pivot)


def generate(spec: TemplateSpec, out_dir=None) -> GroundTruthAsset:
    spec.validate()
    dims = draw_dimensions(spec.template, spec.seed, spec.dimensions)
    builder = {"drawer_cabinet": _drawer_cabinet, "hinged_door": _hinged_door,
               "spin_knob": _spin_knob, "laptop": _laptop, "lamp": _lamp,
               "multi_drawer": lambda d: _multi_drawer(d, None)}[spec.template]
    parts, gt = builder(dims)
    pose = spec.pose
    if pose is not None:
        parts = [(i, m.transformed(pose), p, t) for i, m, p, t in parts]
        gt = [_map_joint(j, pose) for j in gt]
    tree = ArticulationTree([Part(i, m, p, t) for i, m, p, t in parts], parts[0][0])
    asset = GroundTruthAsset(tree, gt, dims)
    if not spec.noise.is_zero:
        asset = perturb(asset, spec.noise, spec.seed)
    if out_dir is not None:
        write_asset(asset, out_dir)
    return asset


def perturb(asset: GroundTruthAsset, noise: Noise, seed: int) -> GroundTruthAsset:
    """Gaussian vertex jitter plus uniform outliers; ground truth is left untouched.

    Exactly floor(fraction * n) vertices per part are replaced by a uniform
    sample from a box of half-width ``outlier_extent`` around the vertex.
    """
    if noise.vertex_jitter_sigma < 0 or not 0 <= noise.outlier_fraction <= 0.5:
        raise InvalidSpecError("invalid noise parameters")
    clean = asset.clean_tree or asset.tree
    parts = []
    for k, p in enumerate(clean.parts):
        rng = np.random.default_rng([seed, 104729, k])
        v = p.mesh.vertices.copy()
        if noise.vertex_jitter_sigma > 0:
            v = v + rng.normal(0.0, noise.vertex_jitter_sigma, v.shape)
        m = int(np.floor(noise.outlier_fraction * len(v)))
        if m:
            idx = rng.choice(len(v), size=m, replace=False)
            e = noise.outlier_extent
            v[idx] = p.mesh.vertices[idx] + rng.uniform(-e, e, (m, 3))
        parts.append(Part(p.part_id, p.mesh.with_vertices(v), p.parent_id, p.joint_type))
    tree = ArticulationTree(parts, clean.root_id)
    return GroundTruthAsset(tree, asset.gt_joints, asset.dimensions, None, clean, None)


def part_labels(tree: ArticulationTree) -> dict:
    """Per-vertex part labels over the manifest-ordered concatenation of part meshes."""
    labels = np.concatenate([np.full(p.mesh.n_vertices, k) for k, p in enumerate(tree.parts)])
    # static lists label values (part indices) of the root and fixed parts
    return {"parts": tree.ids, "labels": labels.tolist(),
            "static": [k for k, p in enumerate(tree.parts)
                       if p.part_id == tree.root_id or p.joint_type is JointType.FIXED]}


def save_gt(joints, path):
    rec = [{"part_id": j.part_id, "type": j.joint_type.value, "axis": j.axis.tolist(),
            "pivot": None if j.pivot is None else j.pivot.tolist(),
            "limits": None if j.limits is None else list(j.limits)} for j in joints]
    Path(path).write_text(json.dumps(rec, indent=1) + "\n")


def load_gt(path) -> list:
    out = []
    for r in json.loads(Path(path).read_text()):
        out.append(JointEstimate(r["part_id"], JointType(r["type"]), r["axis"], r.get("pivot"),
                                 r.get("limits"), "optimized"))
    return out


def write_asset(asset: GroundTruthAsset, out_dir) -> GroundTruthAsset:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    asset.manifest_path = save_decomposition(asset.tree, out)
    if asset.clean_tree is not None:
        asset.clean_manifest_path = save_decomposition(asset.clean_tree, out / "clean")
    save_gt(asset.gt_joints, out / "gt.json")
    (out / "labels.json").write_text(json.dumps(part_labels(asset.tree)) + "\n")
    return asset


def suite(n_assets=20, noise: Noise = Noise(), posed=True, base_seed=0,
          templates=TEMPLATES[:5]) -> list:
    """Seeded specs cycling through the templates."""
    specs = []
    for k in range(n_assets):
        seed = base_seed + k
        specs.append(TemplateSpec(templates[k % len(templates)],
                                  pose=random_pose(seed) if posed else None,
                                  noise=noise, seed=seed))
    return specs


def spec_with(spec: TemplateSpec, **kw) -> TemplateSpec:
    return replace(spec, **kw)
