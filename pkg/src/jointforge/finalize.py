"""Joint limits by forward collision sweeps, and URDF assembly."""
from __future__ import annotations

import logging
import re
import shutil
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .asset import ArticulationTree, JointEstimate, JointType
from .contact import TAU, ContactInterface, extract_contact_escalating
from .errors import InvalidTreeError, UnsetLimitsError, UrdfError
from .geom import RigidTransform, SpatialIndex, TriMesh, mesh_intersects, rotation_about, save_mesh

log = logging.getLogger(__name__)

EFFORT = 100.0
VELOCITY = 1.0
MASS = 1.0
FULL_TURN_TOL = 1e-12


@dataclass(frozen=True)
class LimitSweepConfig:
    angular_step: float = np.pi / 180.0
    linear_step: float = 0.005
    max_angle: float = np.pi
    contact_tau: float = TAU
    # prismatic sweeps stop here; None means twice the part's extent along the axis
    max_travel: Optional[float] = None

    def __post_init__(self):
        if not (self.angular_step > 0 and self.linear_step > 0 and self.contact_tau > 0):
            raise ValueError("sweep steps and contact_tau must be positive")
        if not 0 < self.max_angle <= np.pi:
            raise ValueError("max_angle must be in (0, pi]")
        if self.max_travel is not None and self.max_travel <= 0:
            raise ValueError("max_travel must be positive")


@dataclass(frozen=True, eq=False)
class LimitSweep:
    """Sweep outcome; unpacks as ``lo, hi``.

    ``status`` is ``ok``, ``rest_collision`` or ``no_outward_contact``.
    ``axis`` is the joint axis used, which for prismatic joints is oriented so
    that positive displacement pulls the part out of its slot.
    """

    limits: tuple
    status: str
    axis: np.ndarray
    evidence: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.limits)


def _index(x) -> SpatialIndex:
    return x if isinstance(x, SpatialIndex) else SpatialIndex(x)


def revolute_transform(axis, pivot, theta) -> RigidTransform:
    r = rotation_about(axis, theta)
    p = np.asarray(pivot, dtype=float)
    return RigidTransform(r, p - r @ p)


def _sweep_free(collides, step, limit):
    """Largest k*step (capped at limit) before the first collision; also the hit value."""
    k, last = 1, 0.0
    while True:
        v = min(k * step, limit)
        if collides(v):
            return last, v
        last = v
        if v >= limit:
            return last, None
        k += 1


def estimate_revolute_limits(joint: JointEstimate, moving: TriMesh, static,
                             cfg: LimitSweepConfig = LimitSweepConfig()) -> LimitSweep:
    if not joint.joint_type.is_revolute:
        raise ValueError("revolute sweep needs a revolute joint")
    if joint.pivot is None:
        raise ValueError("revolute sweep needs a pivot")
    static = _index(static)
    axis = joint.axis

    def hit(theta):
        return mesh_intersects(static, moving, revolute_transform(axis, joint.pivot, theta))

    if hit(0.0):
        log.warning("part %s intersects its environment at rest", joint.part_id)
        return LimitSweep((0.0, 0.0), "rest_collision", axis, {"pose": 0.0})
    hi, hit_hi = _sweep_free(hit, cfg.angular_step, cfg.max_angle)
    lo, hit_lo = _sweep_free(lambda t: hit(-t), cfg.angular_step, cfg.max_angle)
    ev = {"first_hit_positive": hit_hi, "first_hit_negative": None if hit_lo is None else -hit_lo}
    return LimitSweep((-lo, hi), "ok", axis, ev)


def contact_count(moving: TriMesh, parent, offset, tau: float) -> int:
    """Vertices of ``moving`` translated by ``offset`` within ``tau`` of ``parent``."""
    return int(np.count_nonzero(_index(parent).distance(moving.vertices + offset) < tau))


def estimate_prismatic_limits(joint: JointEstimate, moving: TriMesh, static,
                              contact: Optional[ContactInterface] = None,
                              cfg: LimitSweepConfig = LimitSweepConfig(),
                              parent=None) -> LimitSweep:
    """Inward stop at first collision; outward stop when contact vanishes (or on collision).

    The contact count is taken against ``parent`` when given, else against
    ``static``. The axis sign is chosen so that the side which collides first
    is the negative one.
    """
    if joint.joint_type is not JointType.PRISMATIC:
        raise ValueError("prismatic sweep needs a prismatic joint")
    static = _index(static)
    parent = static if parent is None else _index(parent)
    axis = joint.axis.copy()
    proj = moving.vertices @ axis
    cap = cfg.max_travel if cfg.max_travel is not None else 2.0 * float(proj.max() - proj.min())
    h = cfg.linear_step

    def hit(d, a):
        return mesh_intersects(static, moving, RigidTransform(np.eye(3), d * a))

    if hit(0.0, axis):
        log.warning("part %s intersects its environment at rest", joint.part_id)
        return LimitSweep((0.0, 0.0), "rest_collision", axis, {"pose": 0.0})
    # orient: whichever direction collides first is inward
    k = 1
    while True:
        v = min(k * h, cap)
        cp, cn = hit(v, axis), hit(-v, axis)
        if cp and not cn:
            axis = -axis
        if cp or cn or v >= cap:
            break
        k += 1
    inward, hit_in = _sweep_free(lambda d: hit(-d, axis), h, cap)
    ev = {"first_hit_negative": None if hit_in is None else -hit_in}
    rest = contact_count(moving, parent, 0.0, cfg.contact_tau)
    if contact is not None and len(contact) == 0 or rest == 0:
        log.warning("part %s has no contact with its parent at rest", joint.part_id)
        return LimitSweep((-inward, 0.0), "no_outward_contact", axis, ev)
    k, out = 1, 0.0
    while True:
        v = min(k * h, cap)
        if hit(v, axis):
            ev["first_hit_positive"] = v
            break
        n = contact_count(moving, parent, v * axis, cfg.contact_tau)
        if n == 0:
            ev["contact_lost"] = v
            break
        out = v
        if v >= cap:
            break
        k += 1
    return LimitSweep((-inward, out), "ok", axis, ev)


def estimate_limits(joint: JointEstimate, moving: TriMesh, static, contact=None,
                    cfg: LimitSweepConfig = LimitSweepConfig(), parent=None) -> LimitSweep:
    if joint.joint_type is JointType.PRISMATIC:
        return estimate_prismatic_limits(joint, moving, static, contact, cfg, parent)
    return estimate_revolute_limits(joint, moving, static, cfg)


# -- URDF ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class UrdfLink:
    name: str
    mesh_file: Optional[str]
    mass: float = MASS
    com: tuple = (0.0, 0.0, 0.0)
    inertia: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class UrdfJoint:
    name: str
    type: str
    parent: str
    child: str
    origin: np.ndarray
    axis: Optional[np.ndarray] = None
    limits: Optional[tuple] = None
    effort: float = EFFORT
    velocity: float = VELOCITY


@dataclass(frozen=True, eq=False)
class UrdfAsset:
    name: str
    links: tuple
    joints: tuple
    document: str
    path: Optional[Path] = None

    def topology(self) -> dict:
        """Child -> parent over links, and the root link."""
        parents = {j.child: j.parent for j in self.joints}
        roots = [ln.name for ln in self.links if ln.name not in parents]
        return {"root": roots[0] if len(roots) == 1 else roots, "parents": parents}

    def joint_for(self, child: str) -> UrdfJoint:
        for j in self.joints:
            if j.child == child:
                return j
        raise KeyError(child)

    def link_origins(self) -> dict:
        """World position of every link frame (frames are world-aligned)."""
        out = {}
        parents = {j.child: j for j in self.joints}

        def origin(name):
            if name not in out:
                j = parents.get(name)
                out[name] = np.zeros(3) if j is None else origin(j.parent) + j.origin
            return out[name]

        for ln in self.links:
            origin(ln.name)
        return out

    def joint_estimates(self, types: Optional[dict] = None) -> list:
        """World-frame estimates; ``types`` restores the spin/hinge split lost in URDF."""
        org = self.link_origins()
        out = []
        for j in self.joints:
            if j.type == "fixed":
                continue
            if j.type == "prismatic":
                jt = JointType.PRISMATIC
            else:
                jt = JointType((types or {}).get(j.child, JointType.HINGE.value))
            lim = (-np.pi, np.pi) if j.type == "continuous" else j.limits
            out.append(JointEstimate(j.child, jt, j.axis, None if jt is JointType.PRISMATIC
                                     else org[j.child], lim, "optimized"))
        return out


def _f(values) -> str:
    return " ".join(repr(float(x)) for x in np.ravel(values))


def _urdf_type(joint: JointEstimate) -> str:
    if joint.joint_type is JointType.PRISMATIC:
        return "prismatic"
    lo, hi = joint.limits
    if abs(lo + np.pi) <= FULL_TURN_TOL and abs(hi - np.pi) <= FULL_TURN_TOL:
        return "continuous"
    return "revolute"


def _box_inertia(mesh: TriMesh, frame, mass=MASS):
    lo, hi = mesh.bounds
    ext = hi - lo
    com = (lo + hi) / 2.0 - frame
    x, y, z = ext
    i = (float(mass * (y * y + z * z) / 12.0), float(mass * (x * x + z * z) / 12.0),
         float(mass * (x * x + y * y) / 12.0))
    return tuple(com.tolist()), i


_MAP_RE = re.compile(r"^\s*(map_\w+|bump|disp|decal|refl)\s+(.+?)\s*$")


def _copy_material(material: str, dst: Path):
    """Copy an .mtl file and the texture files it references next to the meshes."""
    src = Path(material)
    if not src.is_file():
        log.warning("material file %s not found; not copied", src)
        return
    target = dst / src.name
    if not target.exists():
        shutil.copyfile(src, target)
    for line in src.read_text(encoding="utf-8", errors="replace").splitlines():
        m = _MAP_RE.match(line)
        if not m:
            continue
        tex = src.parent / m.group(2).split()[-1]
        if tex.is_file() and not (dst / tex.name).exists():
            shutil.copyfile(tex, dst / tex.name)


def link_frames(tree: ArticulationTree, joints: dict, contacts: dict, tau=TAU) -> dict:
    """World origin of each link frame: the joint origin, or the parent's frame."""
    frames = {}
    for pid in tree.order():
        part = tree[pid]
        if pid == tree.root_id:
            frames[pid] = np.zeros(3)
        elif part.joint_type is JointType.FIXED:
            frames[pid] = frames[part.parent_id].copy()
        elif part.joint_type is JointType.PRISMATIC:
            c = contacts.get(pid)
            if c is None:
                c = extract_contact_escalating(part.mesh, tree[part.parent_id].mesh, tau, pid)
            frames[pid] = np.asarray(c.points, dtype=float).mean(0)
        else:
            frames[pid] = np.asarray(joints[pid].pivot, dtype=float)
    return frames


def emit_urdf(tree: ArticulationTree, joints, out_dir, contacts: Optional[dict] = None,
              name: str = "asset", tau: float = TAU) -> UrdfAsset:
    """Write ``model.urdf`` and ``meshes/<part_id>.obj`` under ``out_dir``.

    Link frames are parallel to the world frame and sit at the joint origin:
    the pivot for revolute joints, the contact centroid for prismatic ones.
    """
    by_id = {j.part_id: j for j in joints}
    unknown = set(by_id) - set(tree.ids)
    if unknown:
        raise InvalidTreeError(f"joints for unknown parts: {sorted(unknown)}")
    for pid in tree.non_root():
        if not tree[pid].joint_type.movable:
            continue
        j = by_id.get(pid)
        if j is None:
            raise InvalidTreeError(f"no joint estimate for movable part {pid!r}", part_id=pid)
        if j.limits is None:
            raise UnsetLimitsError(f"joint {pid!r} has no limits", stage="export", part_id=pid)
        if j.joint_type.coarse != tree[pid].joint_type.coarse:
            raise InvalidTreeError(f"joint {pid!r} type {j.joint_type.value} disagrees with tree",
                                   part_id=pid)
    out = Path(out_dir)
    mdir = out / "meshes"
    mdir.mkdir(parents=True, exist_ok=True)
    frames = link_frames(tree, by_id, contacts or {}, tau)

    robot = ET.Element("robot", name=name)
    links, ujoints = [], []
    for pid in tree.order():
        part = tree[pid]
        frame = frames[pid]
        mesh = part.mesh.with_vertices(part.mesh.vertices - frame)
        rel = f"meshes/{pid}.obj"
        save_mesh(mesh, out / rel, "obj")
        if part.mesh.material:
            _copy_material(part.mesh.material, mdir)
        com, inertia = _box_inertia(part.mesh, frame)
        links.append(UrdfLink(pid, rel, MASS, com, inertia))
        el = ET.SubElement(robot, "link", name=pid)
        inert = ET.SubElement(el, "inertial")
        ET.SubElement(inert, "origin", xyz=_f(com), rpy="0 0 0")
        ET.SubElement(inert, "mass", value=repr(MASS))
        ET.SubElement(inert, "inertia", ixx=repr(inertia[0]), ixy="0", ixz="0",
                      iyy=repr(inertia[1]), iyz="0", izz=repr(inertia[2]))
        for tag in ("visual", "collision"):
            v = ET.SubElement(el, tag)
            ET.SubElement(v, "origin", xyz="0 0 0", rpy="0 0 0")
            g = ET.SubElement(v, "geometry")
            ET.SubElement(g, "mesh", filename=rel)
    for pid in tree.non_root():
        part = tree[pid]
        origin = frames[pid] - frames[part.parent_id]
        if part.joint_type is JointType.FIXED:
            jt, axis, lim = "fixed", None, None
        else:
            j = by_id[pid]
            jt, axis = _urdf_type(j), j.axis
            lim = None if jt == "continuous" else j.limits
        ujoints.append(UrdfJoint(f"joint_{pid}", jt, part.parent_id, pid, origin, axis, lim))
        el = ET.SubElement(robot, "joint", name=f"joint_{pid}", type=jt)
        ET.SubElement(el, "origin", xyz=_f(origin), rpy="0 0 0")
        ET.SubElement(el, "parent", link=part.parent_id)
        ET.SubElement(el, "child", link=pid)
        if axis is not None:
            ET.SubElement(el, "axis", xyz=_f(axis))
        if lim is not None:
            ET.SubElement(el, "limit", lower=repr(float(lim[0])), upper=repr(float(lim[1])),
                          effort=repr(EFFORT), velocity=repr(VELOCITY))
        elif jt == "continuous":
            # continuous joints still carry effort/velocity bounds
            ET.SubElement(el, "limit", effort=repr(EFFORT), velocity=repr(VELOCITY))
    ET.indent(robot, space="  ")
    doc = '<?xml version="1.0"?>\n' + ET.tostring(robot, encoding="unicode") + "\n"
    path = out / "model.urdf"
    path.write_text(doc, encoding="utf-8")
    return UrdfAsset(name, tuple(links), tuple(ujoints), doc, path)


def _vec(el, attr, default=None):
    if el is None or el.get(attr) is None:
        return default
    try:
        return np.array([float(x) for x in el.get(attr).split()])
    except ValueError:
        raise UrdfError(f"bad numeric attribute {attr}={el.get(attr)!r}") from None


def parse_urdf(source) -> UrdfAsset:
    """Parse a URDF path or XML text written by ``emit_urdf`` (or compatible)."""
    path = None
    text = str(source)
    if not text.lstrip().startswith("<"):
        path = Path(source)
        text = path.read_text(encoding="utf-8")
    try:
        root = ET.fromstring(text)
    except ET.ParseError as e:
        raise UrdfError(f"malformed URDF: {e}") from None
    if root.tag != "robot":
        raise UrdfError("root element is not <robot>")
    links = []
    for el in root.findall("link"):
        mesh = el.find("visual/geometry/mesh")
        inert = el.find("inertial")
        mass, com, inertia = MASS, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)
        if inert is not None:
            m = inert.find("mass")
            mass = float(m.get("value")) if m is not None else MASS
            com = tuple(_vec(inert.find("origin"), "xyz", np.zeros(3)).tolist())
            i = inert.find("inertia")
            if i is not None:
                inertia = tuple(float(i.get(k, 0.0)) for k in ("ixx", "iyy", "izz"))
        links.append(UrdfLink(el.get("name"), None if mesh is None else mesh.get("filename"),
                              mass, com, inertia))
    joints = []
    for el in root.findall("joint"):
        jt = el.get("type")
        if jt not in ("revolute", "continuous", "prismatic", "fixed"):
            raise UrdfError(f"unsupported joint type {jt!r}")
        lim_el = el.find("limit")
        lim = None
        effort, velocity = EFFORT, VELOCITY
        if lim_el is not None:
            effort = float(lim_el.get("effort", EFFORT))
            velocity = float(lim_el.get("velocity", VELOCITY))
            if jt in ("revolute", "prismatic"):
                lim = (float(lim_el.get("lower", 0.0)), float(lim_el.get("upper", 0.0)))
        axis = None if jt == "fixed" else _vec(el.find("axis"), "xyz", np.array([1.0, 0.0, 0.0]))
        joints.append(UrdfJoint(el.get("name"), jt, el.find("parent").get("link"),
                                el.find("child").get("link"),
                                _vec(el.find("origin"), "xyz", np.zeros(3)), axis, lim,
                                effort, velocity))
    return UrdfAsset(root.get("name", ""), tuple(links), tuple(joints), text, path)
