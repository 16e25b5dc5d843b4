"""Articulation tree data model, manifest I/O and the topology service client."""
from __future__ import annotations

import enum
import json
import logging
import socket
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (CycleError, DuplicatePartError, InvalidResponse, ManifestError,
                     MissingMeshError, ServiceError, ServiceNetworkError, ServiceTimeout,
                     TopologyMismatch)
from .geom import SpatialIndex, TriMesh, load_mesh, save_mesh

log = logging.getLogger(__name__)


class JointType(str, enum.Enum):
    SPIN = "revolute_spin"
    HINGE = "revolute_hinge"
    PRISMATIC = "prismatic"
    FIXED = "fixed"

    @property
    def is_revolute(self) -> bool:
        return self in (JointType.SPIN, JointType.HINGE)

    @property
    def coarse(self) -> str:
        return "revolute" if self.is_revolute else self.value

    @property
    def movable(self) -> bool:
        return self is not JointType.FIXED


@dataclass(frozen=True, eq=False)
class Part:
    part_id: str
    mesh: TriMesh
    parent_id: Optional[str]
    joint_type: JointType
    source: Optional[str] = None


@dataclass(eq=False)
class JointEstimate:
    part_id: str
    joint_type: JointType
    axis: np.ndarray
    pivot: Optional[np.ndarray] = None
    limits: Optional[tuple] = None
    stage: str = "initialized"

    def __post_init__(self):
        self.joint_type = JointType(self.joint_type)
        a = np.asarray(self.axis, dtype=float).reshape(3)
        n = np.linalg.norm(a)
        if not np.isfinite(n) or n == 0:
            raise ValueError(f"{self.part_id}: joint axis must be a non-zero vector")
        # leave near-unit axes untouched so saved estimates reload bit-exactly
        self.axis = a if abs(n - 1.0) <= 1e-12 else a / n
        if self.joint_type is JointType.PRISMATIC or self.pivot is None:
            self.pivot = None
        else:
            self.pivot = np.asarray(self.pivot, dtype=float).reshape(3)
        if self.limits is not None:
            lo, hi = (float(x) for x in self.limits)
            if not lo <= 0.0 <= hi:
                raise ValueError(f"{self.part_id}: limits [{lo}, {hi}] must bracket the rest pose")
            self.limits = (lo, hi)
        if self.stage not in ("initialized", "optimized"):
            raise ValueError(f"unknown stage {self.stage!r}")

    def replace(self, **kw) -> "JointEstimate":
        d = dict(part_id=self.part_id, joint_type=self.joint_type, axis=self.axis,
                 pivot=self.pivot, limits=self.limits, stage=self.stage)
        d.update(kw)
        return JointEstimate(**d)

    def to_dict(self) -> dict:
        return {
            "part_id": self.part_id,
            "type": self.joint_type.value,
            "axis": self.axis.tolist(),
            "pivot": None if self.pivot is None else self.pivot.tolist(),
            "limits": None if self.limits is None else list(self.limits),
            "stage": self.stage,
        }

    @classmethod
    def from_dict(cls, d) -> "JointEstimate":
        return cls(d["part_id"], JointType(d["type"]), d["axis"], d.get("pivot"),
                   d.get("limits"), d.get("stage", "initialized"))


def save_joints(joints, path):
    Path(path).write_text(json.dumps([j.to_dict() for j in joints], indent=1) + "\n")


def load_joints(path) -> list:
    return [JointEstimate.from_dict(d) for d in json.loads(Path(path).read_text())]


@dataclass(frozen=True, eq=False)
class ArticulationTree:
    parts: tuple
    root_id: str
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "_by_id", {p.part_id: p for p in self.parts})
        validate_topology(self.root_id, [(p.part_id, p.parent_id, p.joint_type.value)
                                         for p in self.parts])
        for p in self.parts:
            if p.mesh.n_faces == 0:
                raise ManifestError("mesh is empty", f"parts[{p.part_id}]")

    def __getitem__(self, part_id) -> Part:
        return self._by_id[part_id]

    @property
    def ids(self) -> list:
        return [p.part_id for p in self.parts]

    def children(self, part_id) -> list:
        return [p.part_id for p in self.parts if p.parent_id == part_id]

    def order(self) -> list:
        """Breadth-first part order from the root, siblings in manifest order."""
        out = [self.root_id]
        i = 0
        while i < len(out):
            out.extend(self.children(out[i]))
            i += 1
        return out

    def movable(self) -> list:
        return [i for i in self.order() if self[i].joint_type.movable]

    def non_root(self) -> list:
        return self.order()[1:]

    def subtree(self, part_id) -> list:
        out = [part_id]
        i = 0
        while i < len(out):
            out.extend(self.children(out[i]))
            i += 1
        return out

    def outside_subtree(self, part_id) -> list:
        sub = set(self.subtree(part_id))
        return [i for i in self.order() if i not in sub]

    def topology(self) -> dict:
        return {"root": self.root_id,
                "parts": [{"id": p.part_id, "parent": p.parent_id, "joint": p.joint_type.value}
                          for p in self.parts]}

    def with_meshes(self, meshes: dict) -> "ArticulationTree":
        return ArticulationTree([Part(p.part_id, meshes.get(p.part_id, p.mesh), p.parent_id,
                                      p.joint_type, p.source) for p in self.parts], self.root_id)


_JOINTS = {t.value for t in JointType}


def validate_topology(root, entries, known_ids=None):
    """Check a (part_id, parent_id, joint) list forms a rooted tree.

    Single validation path for manifests and service responses.
    """
    ids = [e[0] for e in entries]
    seen = set()
    for pid in ids:
        if pid in seen:
            raise DuplicatePartError(f"duplicate part id {pid!r}")
        seen.add(pid)
    if known_ids is not None:
        unknown = [i for i in ids if i not in known_ids]
        if unknown:
            raise TopologyMismatch(f"unknown part id(s): {unknown}")
        missing = [i for i in known_ids if i not in seen]
        if missing:
            raise TopologyMismatch(f"topology omits part(s): {missing}")
    parent = {}
    for k, (pid, par, joint) in enumerate(entries):
        if joint not in _JOINTS:
            raise ManifestError(f"unknown joint type {joint!r}", f"parts[{k}].joint")
        if par is not None and par not in seen:
            raise ManifestError(f"parent {par!r} is not a part", f"parts[{k}].parent")
        parent[pid] = par
    for start in ids:
        path = [start]
        cur = parent[start]
        while cur is not None:
            if cur in path:
                raise CycleError(path[path.index(cur):] + [cur])
            path.append(cur)
            cur = parent[cur]
    roots = [i for i in ids if parent[i] is None]
    if len(roots) != 1:
        raise ManifestError(f"expected exactly one root, found {roots}", "parts")
    if root != roots[0]:
        raise ManifestError(f"root {root!r} does not match parentless part {roots[0]!r}", "root")
    root_joint = dict((e[0], e[2]) for e in entries)[root]
    if root_joint != JointType.FIXED.value:
        raise ManifestError("root part must have joint 'fixed'", "root")


def _schema_check(doc, with_mesh=True):
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object")
    if not isinstance(doc.get("root"), str):
        raise ManifestError("missing or non-string field", "root")
    parts = doc.get("parts")
    if not isinstance(parts, list) or not parts:
        raise ManifestError("must be a non-empty list", "parts")
    entries = []
    for k, p in enumerate(parts):
        where = f"parts[{k}]"
        if not isinstance(p, dict):
            raise ManifestError("must be an object", where)
        if not isinstance(p.get("id"), str) or not p["id"]:
            raise ManifestError("missing or non-string field", where + ".id")
        if with_mesh and not isinstance(p.get("mesh"), str):
            raise ManifestError("missing or non-string field", where + ".mesh")
        if "parent" not in p or not (p["parent"] is None or isinstance(p["parent"], str)):
            raise ManifestError("must be a part id or null", where + ".parent")
        if p.get("joint") not in _JOINTS:
            raise ManifestError(f"must be one of {sorted(_JOINTS)}", where + ".joint")
        entries.append((p["id"], p["parent"], p["joint"]))
    return entries


def load_decomposition(manifest_path) -> ArticulationTree:
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingMeshError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid JSON ({e.msg} at line {e.lineno})") from None
    entries = _schema_check(doc)
    validate_topology(doc["root"], entries)
    parts = []
    for p in doc["parts"]:
        mp = (manifest_path.parent / p["mesh"])
        if not mp.is_file():
            raise MissingMeshError(f"mesh file for part {p['id']!r} not found: {mp}")
        parts.append(Part(p["id"], load_mesh(mp), p["parent"], JointType(p["joint"]), p["mesh"]))
    return ArticulationTree(parts, doc["root"])


def load_part_meshes(manifest_path) -> dict:
    """Meshes by part id from a manifest, ignoring its topology fields."""
    manifest_path = Path(manifest_path)
    try:
        doc = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise MissingMeshError(f"manifest not found: {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"invalid JSON ({e.msg} at line {e.lineno})") from None
    out = {}
    for k, p in enumerate(doc.get("parts") or []):
        if not isinstance(p, dict) or not isinstance(p.get("id"), str) \
                or not isinstance(p.get("mesh"), str):
            raise ManifestError("needs string id and mesh", f"parts[{k}]")
        mp = manifest_path.parent / p["mesh"]
        if not mp.is_file():
            raise MissingMeshError(f"mesh file for part {p['id']!r} not found: {mp}")
        out[p["id"]] = load_mesh(mp)
    if not out:
        raise ManifestError("must be a non-empty list", "parts")
    return out


def save_decomposition(tree: ArticulationTree, out_dir, mesh_format="ply") -> Path:
    out_dir = Path(out_dir)
    (out_dir / "meshes").mkdir(parents=True, exist_ok=True)
    parts = []
    for p in tree.parts:
        rel = f"meshes/{p.part_id}.{mesh_format}"
        save_mesh(p.mesh, out_dir / rel)
        parts.append({"id": p.part_id, "mesh": rel, "parent": p.parent_id,
                      "joint": p.joint_type.value})
    path = out_dir / "manifest.json"
    path.write_text(json.dumps({"root": tree.root_id, "parts": parts}, indent=1) + "\n")
    return path


# -- external topology service -------------------------------------------------

def summarize_parts(meshes: dict, tau: float = 0.01) -> dict:
    """Per-part bounding boxes, vertex counts and pairwise contact flags."""
    ids = list(meshes)
    parts = [{"id": i, "bbox_min": meshes[i].vertices.min(0).tolist(),
              "bbox_max": meshes[i].vertices.max(0).tolist(),
              "n_vertices": int(meshes[i].n_vertices)} for i in ids]
    index = {i: SpatialIndex(meshes[i]) for i in ids}
    adjacency = []
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            ia, ib = ids[a], ids[b]
            if np.any(index[ib].distance(meshes[ia].vertices) < tau):
                adjacency.append([ia, ib])
    return {"parts": parts, "adjacency": adjacency}


def fetch_tree_from_service(endpoint: str, summary: dict, timeout: float = 30.0) -> dict:
    """POST part summaries, return the validated topology document."""
    body = json.dumps(summary).encode("utf-8")
    req = urllib.request.Request(endpoint, data=body, method="POST",
                                 headers={"Content-Type": "application/json; charset=utf-8"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except (socket.timeout, TimeoutError):
        raise ServiceTimeout(f"{endpoint}: no response within {timeout} s") from None
    except urllib.error.URLError as e:
        if isinstance(e.reason, (socket.timeout, TimeoutError)):
            raise ServiceTimeout(f"{endpoint}: no response within {timeout} s") from None
        raise ServiceNetworkError(f"{endpoint}: {e.reason}") from None
    except OSError as e:
        raise ServiceNetworkError(f"{endpoint}: {e}") from None
    try:
        doc = json.loads(raw.decode("utf-8"))
        entries = _schema_check(doc, with_mesh=False)
    except (UnicodeDecodeError, json.JSONDecodeError, ManifestError) as e:
        raise InvalidResponse(f"{endpoint}: {e}") from None
    known = [p["id"] for p in summary["parts"]]
    try:
        validate_topology(doc["root"], entries, known_ids=known)
    except TopologyMismatch:
        raise
    except ManifestError as e:
        raise TopologyMismatch(f"{endpoint}: {e}") from None
    return {"root": doc["root"],
            "parts": [{"id": i, "parent": p, "joint": j} for i, p, j in entries]}


def tree_from_topology(meshes: dict, topology: dict) -> ArticulationTree:
    parts = [Part(p["id"], meshes[p["id"]], p["parent"], JointType(p["joint"]))
             for p in topology["parts"]]
    return ArticulationTree(parts, topology["root"])


def resolve_tree(meshes: dict, endpoint: str, fallback_manifest=None, timeout=30.0,
                 tau=0.01) -> ArticulationTree:
    """Ask the service for the topology; fall back to a manifest file if configured."""
    try:
        topo = fetch_tree_from_service(endpoint, summarize_parts(meshes, tau), timeout)
        return tree_from_topology(meshes, topo)
    except ServiceError as e:
        if fallback_manifest is None:
            raise
        log.warning("tree service failed (%s); using %s", e, fallback_manifest)
        return load_decomposition(fallback_manifest)
