"""OBJ / PLY / STL readers and writers."""
from __future__ import annotations

import logging
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import EmptyMeshError, MeshParseError
from .mesh import TriMesh

log = logging.getLogger(__name__)

FORMATS = ("obj", "ply", "stl")


def _format_of(path, fmt):
    if fmt is None:
        fmt = Path(path).suffix.lstrip(".").lower()
    if fmt not in FORMATS:
        raise ValueError(f"unsupported mesh format {fmt!r}")
    return fmt


def _finish(vertices, faces, path, uv=None, face_uv=None, material=None) -> TriMesh:
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(f) and (f.min() < 0 or f.max() >= len(v)):
        raise MeshParseError("face index out of range", path)
    if not np.all(np.isfinite(v)):
        raise MeshParseError("non-finite vertex coordinate", path)
    if len(f):
        rep = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        t = v[f]
        area2 = np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
        keep = ~rep & (area2 > 0.0)
    else:
        keep = np.zeros(0, dtype=bool)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("%s: dropped %d degenerate face(s)", path, dropped)
    f = f[keep]
    if face_uv is not None:
        face_uv = np.asarray(face_uv, dtype=np.int64).reshape(-1, 3)[keep]
    if len(f) == 0:
        raise EmptyMeshError(f"{path}: mesh has no faces")
    return TriMesh(v, f, uv, face_uv, material, dropped_faces=dropped)


def load_mesh(path, format: str | None = None) -> TriMesh:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")
    fmt = _format_of(path, format)
    return {"obj": _read_obj, "ply": _read_ply, "stl": _read_stl}[fmt](path)


def save_mesh(mesh: TriMesh, path, format: str | None = None, binary: bool = True):
    path = Path(path)
    fmt = _format_of(path, format)
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt == "obj":
        _write_obj(mesh, path)
    elif fmt == "ply":
        _write_ply(mesh, path, binary)
    else:
        _write_stl(mesh, path)


# -- OBJ ------------------------------------------------------------------

def _obj_index(tok, n, path, lineno):
    try:
        i = int(tok)
    except ValueError:
        raise MeshParseError(f"bad index {tok!r}", path, lineno) from None
    if i == 0:
        raise MeshParseError("OBJ indices are 1-based", path, lineno)
    return i - 1 if i > 0 else n + i


def _read_obj(path):
    verts, uvs, faces, fuv = [], [], [], []
    uv_ok = True
    material = None
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    verts.append([float(x) for x in parts[1:4]])
                    if len(verts[-1]) != 3:
                        raise ValueError
                elif tag == "vt":
                    uvs.append([float(x) for x in parts[1:3]])
                elif tag == "mtllib" and material is None and len(parts) > 1:
                    material = str((path.parent / " ".join(parts[1:])).resolve())
            except ValueError:
                raise MeshParseError(f"malformed {tag!r} record", path, lineno) from None
            if tag != "f":
                continue
            corners = parts[1:]
            if len(corners) < 3:
                raise MeshParseError("face with fewer than 3 corners", path, lineno)
            vi, ti = [], []
            for c in corners:
                fields = c.split("/")
                vi.append(_obj_index(fields[0], len(verts), path, lineno))
                if len(fields) > 1 and fields[1]:
                    ti.append(_obj_index(fields[1], len(uvs), path, lineno))
            if len(ti) != len(vi):
                uv_ok = False
            for k in range(1, len(vi) - 1):
                faces.append((vi[0], vi[k], vi[k + 1]))
                if len(ti) == len(vi):
                    fuv.append((ti[0], ti[k], ti[k + 1]))
    uv = face_uv = None
    if uvs and uv_ok and len(fuv) == len(faces):
        uv = np.array(uvs, dtype=float)
        face_uv = np.array(fuv, dtype=np.int64)
    return _finish(verts, faces, path, uv, face_uv, material)


def _first_material_name(mtl_path):
    try:
        with open(mtl_path, "r", encoding="utf-8", errors="replace") as fh:
            for line in fh:
                p = line.split()
                if len(p) >= 2 and p[0] == "newmtl":
                    return " ".join(p[1:])
    except OSError:
        pass
    return None


def _write_obj(mesh, path):
    lines = []
    if mesh.material:
        lines.append(f"mtllib {os.path.basename(mesh.material)}")
        name = _first_material_name(mesh.material)
        if name:
            lines.append(f"usemtl {name}")
    lines.extend(f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist())
    if mesh.uv is not None:
        lines.extend(f"vt {u!r} {v!r}" for u, v in mesh.uv.tolist())
        for (a, b, c), (ta, tb, tc) in zip((mesh.faces + 1).tolist(),
                                           (mesh.face_uv + 1).tolist()):
            lines.append(f"f {a}/{ta} {b}/{tb} {c}/{tc}")
    else:
        lines.extend(f"f {a} {b} {c}" for a, b, c in (mesh.faces + 1).tolist())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- PLY ------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh, path):
    if fh.readline().strip() != b"ply":
        raise MeshParseError("missing 'ply' magic", path, 1)
    fmt = None
    elements = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise MeshParseError("unterminated header", path, lineno)
        p = raw.decode("ascii", errors="replace").split()
        if not p or p[0] in ("comment", "obj_info"):
            continue
        if p[0] == "end_header":
            break
        if p[0] == "format":
            fmt = p[1]
        elif p[0] == "element":
            elements.append({"name": p[1], "count": int(p[2]), "props": []})
        elif p[0] == "property":
            if not elements:
                raise MeshParseError("property before element", path, lineno)
            if p[1] == "list":
                elements[-1]["props"].append((p[4], "list", _PLY_TYPES[p[2]], _PLY_TYPES[p[3]]))
            else:
                if p[1] not in _PLY_TYPES:
                    raise MeshParseError(f"unknown type {p[1]!r}", path, lineno)
                elements[-1]["props"].append((p[2], "scalar", _PLY_TYPES[p[1]], None))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshParseError(f"unsupported PLY format {fmt!r}", path)
    return fmt, elements, lineno


def _read_ply(path):
    with open(path, "rb") as fh:
        fmt, elements, header_lines = _parse_ply_header(fh, path)
        body_offset = fh.tell()
        data = fh.read()
    if fmt == "ascii":
        tables = _ply_ascii(data.decode("ascii", errors="replace"), elements, path, header_lines)
    else:
        tables = _ply_binary(data, elements, path, body_offset)
    if "vertex" not in tables or "face" not in tables:
        raise MeshParseError("PLY needs vertex and face elements", path)
    vt = tables["vertex"]
    try:
        v = np.column_stack([vt["x"], vt["y"], vt["z"]]).astype(float)
    except KeyError:
        raise MeshParseError("vertex element lacks x/y/z", path) from None
    uv = None
    for a, b in (("u", "v"), ("s", "t"), ("texture_u", "texture_v")):
        if a in vt and b in vt:
            uv = np.column_stack([vt[a], vt[b]]).astype(float)
            break
    faces = []
    polys = tables["face"].get("vertex_indices", tables["face"].get("vertex_index"))
    if polys is None:
        raise MeshParseError("face element lacks vertex_indices", path)
    for poly in polys:
        for k in range(1, len(poly) - 1):
            faces.append((poly[0], poly[k], poly[k + 1]))
    faces = np.array(faces, dtype=np.int64).reshape(-1, 3)
    return _finish(v, faces, path, uv, faces if uv is not None else None)


def _ply_ascii(text, elements, path, header_lines):
    lines = text.splitlines()
    pos = 0
    tables = {}
    for el in elements:
        cols = {name: [] for name, *_ in el["props"]}
        for _ in range(el["count"]):
            while pos < len(lines) and not lines[pos].strip():
                pos += 1
            if pos >= len(lines):
                raise MeshParseError(f"truncated {el['name']} data", path, header_lines + pos + 1)
            toks = lines[pos].split()
            k = 0
            try:
                for name, kind, t, it in el["props"]:
                    if kind == "list":
                        n = int(toks[k])
                        cols[name].append([int(float(x)) for x in toks[k + 1:k + 1 + n]])
                        k += 1 + n
                    else:
                        cols[name].append(float(toks[k]))
                        k += 1
            except (ValueError, IndexError):
                raise MeshParseError(f"malformed {el['name']} record", path,
                                     header_lines + pos + 1) from None
            pos += 1
        kinds = {name: kind for name, kind, _, _ in el["props"]}
        tables[el["name"]] = {n: (c if kinds[n] == "list" else np.array(c))
                              for n, c in cols.items()}
    return tables


def _ply_binary(data, elements, path, base):
    pos = 0
    tables = {}
    for el in elements:
        props = el["props"]
        n = el["count"]
        if all(kind == "scalar" for _, kind, _, _ in props):
            dt = np.dtype([(name, "<" + t) for name, _, t, _ in props])
            end = pos + dt.itemsize * n
            if end > len(data):
                raise MeshParseError(f"truncated {el['name']} data", path, offset=base + pos)
            arr = np.frombuffer(data, dtype=dt, count=n, offset=pos)
            tables[el["name"]] = {name: arr[name] for name in dt.names}
            pos = end
            continue
        # list properties: try the all-triangles fast path, else walk records
        if len(props) == 1 and props[0][1] == "list" and n:
            name, _, ct, it = props[0]
            rec = np.dtype([("n", "<" + ct), ("i", "<" + it, (3,))])
            end = pos + rec.itemsize * n
            if end <= len(data):
                arr = np.frombuffer(data, dtype=rec, count=n, offset=pos)
                if np.all(arr["n"] == 3):
                    tables[el["name"]] = {name: arr["i"].astype(np.int64)}
                    pos = end
                    continue
        cols = {name: [] for name, *_ in props}
        for _ in range(n):
            for name, kind, t, it in props:
                try:
                    if kind == "list":
                        cnt = np.frombuffer(data, "<" + t, 1, pos)[0]
                        pos += np.dtype(t).itemsize
                        vals = np.frombuffer(data, "<" + it, int(cnt), pos)
                        pos += np.dtype(it).itemsize * int(cnt)
                        cols[name].append(vals.astype(np.int64).tolist())
                    else:
                        cols[name].append(np.frombuffer(data, "<" + t, 1, pos)[0])
                        pos += np.dtype(t).itemsize
                except ValueError:
                    raise MeshParseError(f"truncated {el['name']} data", path,
                                         offset=base + pos) from None
        tables[el["name"]] = cols
    return tables


def _write_ply(mesh, path, binary=True):
    has_uv = mesh.uv is not None and np.array_equal(mesh.face_uv, mesh.faces)
    header = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0"]
    if mesh.material:
        header.append(f"comment TextureFile {os.path.basename(mesh.material)}")
    header += [f"element vertex {mesh.n_vertices}",
               "property double x", "property double y", "property double z"]
    if has_uv:
        header += ["property double u", "property double v"]
    header += [f"element face {mesh.n_faces}", "property list uchar int vertex_indices",
               "end_header"]
    head = ("\n".join(header) + "\n").encode("ascii")
    cols = [mesh.vertices]
    if has_uv:
        cols.append(mesh.uv)
    vdata = np.hstack(cols)
    if binary:
        rec = np.empty(mesh.n_faces, dtype=[("n", "u1"), ("i", "<i4", (3,))])
        rec["n"] = 3
        rec["i"] = mesh.faces
        body = vdata.astype("<f8").tobytes() + rec.tobytes()
        path.write_bytes(head + body)
    else:
        lines = [" ".join(repr(x) for x in row) for row in vdata.tolist()]
        lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
        path.write_bytes(head + ("\n".join(lines) + "\n").encode("ascii"))


# -- STL ------------------------------------------------------------------

def _read_stl(path):
    data = path.read_bytes()
    if len(data) >= 84:
        (n,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * n == len(data):
            rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")])
            arr = np.frombuffer(data, dtype=rec, count=n, offset=84)
            tri = arr["v"].astype(float).reshape(-1, 3)
            return _dedupe(tri, path)
    if data.lstrip()[:5].lower() == b"solid":
        pts = []
        for lineno, line in enumerate(data.decode("ascii", errors="replace").splitlines(), 1):
            p = line.split()
            if p and p[0] == "vertex":
                try:
                    pts.append([float(x) for x in p[1:4]])
                except ValueError:
                    raise MeshParseError("malformed vertex", path, lineno) from None
        if len(pts) % 3:
            raise MeshParseError("vertex count not a multiple of 3", path)
        return _dedupe(np.array(pts, dtype=float).reshape(-1, 3), path)
    raise MeshParseError("not a binary or ASCII STL", path, offset=0)


def _dedupe(corners, path):
    if len(corners) == 0:
        raise EmptyMeshError(f"{path}: mesh has no faces")
    uniq, inv = np.unique(corners, axis=0, return_inverse=True)
    return _finish(uniq, inv.reshape(-1, 3), path)


def _write_stl(mesh, path):
    tri = mesh.triangles
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    ln = np.linalg.norm(n, axis=1, keepdims=True)
    n = n / np.where(ln > 0, ln, 1.0)
    rec = np.zeros(len(tri), dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("a", "<u2")])
    rec["n"] = n
    rec["v"] = tri
    header = b"binary STL".ljust(80, b"\0")
    path.write_bytes(header + struct.pack("<I", len(tri)) + rec.tobytes())
