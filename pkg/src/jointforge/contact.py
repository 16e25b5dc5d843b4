"""Contact interface between a movable part and its parent."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyContactError
from .geom import SpatialIndex, TriMesh

log = logging.getLogger(__name__)

TAU = 0.01
ESCALATION = (1, 2, 5, 10)
TAU_CAP = 0.1


@dataclass(frozen=True, eq=False)
class ContactInterface:
    part_id: str
    points: np.ndarray
    source_indices: np.ndarray
    tau: float

    def __len__(self):
        return len(self.source_indices)


def _index(parent) -> SpatialIndex:
    return parent if isinstance(parent, SpatialIndex) else SpatialIndex(parent)


def extract_contact(child: TriMesh, parent, tau: float = TAU, part_id: str = "") -> ContactInterface:
    """Child vertices strictly closer than ``tau`` to the parent surface."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    d = _index(parent).distance(child.vertices)
    idx = np.flatnonzero(d < tau)
    if len(idx) == 0:
        raise EmptyContactError(
            f"no vertex of part {part_id!r} within {tau} m of its parent "
            f"(closest {d.min():.4g} m)", stage="contact", part_id=part_id)
    return ContactInterface(part_id, child.vertices[idx].copy(), idx, float(tau))


def extract_contact_escalating(child: TriMesh, parent, tau: float = TAU, part_id: str = "",
                               ladder=ESCALATION, cap: float = TAU_CAP) -> ContactInterface:
    """Retry with tau scaled by ``ladder`` (capped at ``cap``) until contact is found."""
    index = _index(parent)
    tried = []
    for k in ladder:
        t = min(tau * k, cap)
        if tried and t == tried[-1]:
            continue
        if tried:
            log.warning("part %s: empty contact at tau=%g, escalating to %g", part_id, tried[-1], t)
        tried.append(t)
        try:
            return extract_contact(child, index, t, part_id)
        except EmptyContactError:
            continue
    raise EmptyContactError(f"no contact for part {part_id!r} at tau in {tried}",
                            stage="contact", part_id=part_id)


def dump_contact(contact: ContactInterface, out_dir) -> Path:
    """Write contact points as a PLY point cloud."""
    path = Path(out_dir) / f"contact_{contact.part_id}.ply"
    path.parent.mkdir(parents=True, exist_ok=True)
    head = ["ply", "format ascii 1.0", f"element vertex {len(contact.points)}",
            "property double x", "property double y", "property double z",
            "property int source_index", "end_header"]
    rows = [f"{x!r} {y!r} {z!r} {int(i)}" for (x, y, z), i in
            zip(contact.points.tolist(), contact.source_indices)]
    path.write_text("\n".join(head + rows) + "\n")
    return path


def load_contact(path, part_id: str = None, tau: float = TAU) -> ContactInterface:
    """Read a PLY written by ``dump_contact``."""
    path = Path(path)
    lines = path.read_text().splitlines()
    end = lines.index("end_header")
    n = int(next(ln.split()[2] for ln in lines[:end] if ln.startswith("element vertex")))
    rows = [ln.split() for ln in lines[end + 1:end + 1 + n]]
    pts = np.array([[float(x) for x in r[:3]] for r in rows]).reshape(-1, 3)
    idx = np.array([int(r[3]) for r in rows], dtype=np.int64)
    if part_id is None:
        part_id = path.stem[len("contact_"):]
    return ContactInterface(part_id, pts, idx, float(tau))
