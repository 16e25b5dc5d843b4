from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import MeshError


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh in a world frame, meters.

    ``uv``/``face_uv`` index per-corner texture coordinates and ``material``
    names the texture/material file; all three are carried verbatim.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uv: Optional[np.ndarray] = None
    face_uv: Optional[np.ndarray] = None
    material: Optional[str] = None
    dropped_faces: int = field(default=0, compare=False)

    def __post_init__(self):
        v = _frozen(self.vertices, np.float64).reshape(-1, 3)
        f = _frozen(self.faces, np.int64).reshape(-1, 3)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("face references the same vertex twice")
        if self.uv is not None:
            object.__setattr__(self, "uv", _frozen(self.uv, np.float64).reshape(-1, 2))
            fu = self.face_uv if self.face_uv is not None else f
            fu = _frozen(fu, np.int64).reshape(-1, 3)
            if fu.shape != f.shape:
                raise MeshError("face_uv must match faces")
            if fu.size and (fu.min() < 0 or fu.max() >= len(self.uv)):
                raise MeshError("uv index out of range")
            object.__setattr__(self, "face_uv", fu)
        elif self.face_uv is not None:
            raise MeshError("face_uv given without uv")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def bounds(self) -> np.ndarray:
        return np.stack([self.vertices.min(axis=0), self.vertices.max(axis=0)])

    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def is_watertight(self) -> bool:
        """Every undirected edge shared by exactly two faces."""
        if not self.n_faces:
            return False
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        _, counts = np.unique(e, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces, self.uv, self.face_uv, self.material)

    def transformed(self, transform: "RigidTransform") -> "TriMesh":
        return self.with_vertices(transform.apply(self.vertices))

    def content_hash(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.faces.tobytes())
        if self.uv is not None:
            h.update(self.uv.tobytes())
            h.update(self.face_uv.tobytes())
        return h.hexdigest()


def merge_meshes(meshes) -> TriMesh:
    """Concatenate meshes into one (texture data is not merged)."""
    meshes = list(meshes)
    if not meshes:
        raise MeshError("nothing to merge")
    offs = np.cumsum([0] + [m.n_vertices for m in meshes[:-1]])
    v = np.concatenate([m.vertices for m in meshes])
    f = np.concatenate([m.faces + o for m, o in zip(meshes, offs)])
    return TriMesh(v, f)


def rotation_about(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = _frozen(self.rotation, np.float64).reshape(3, 3)
        t = _frozen(self.translation, np.float64).reshape(3)
        if np.abs(r @ r.T - np.eye(3)).max() > 1e-9 or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle, translation=(0.0, 0.0, 0.0), pivot=None):
        r = rotation_about(axis, angle)
        t = np.asarray(translation, dtype=float)
        if pivot is not None:
            p = np.asarray(pivot, dtype=float)
            t = t + p - r @ p
        return cls(r, t)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_vector(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.rotation.T

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def to_dict(self) -> dict:
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}

    @classmethod
    def from_dict(cls, d) -> "RigidTransform":
        return cls(np.array(d["rotation"]), np.array(d["translation"]))
