"""Triangle meshes and OBJ / PLY input-output."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class MeshError(ValueError):
    """Raised for unreadable or empty meshes."""


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray = field(repr=False)
    dropped_faces: int = 0

    @property
    def areas(self) -> np.ndarray:
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def transformed(self, R, t) -> "Mesh":
        """Copy of the mesh under the rigid map x -> R x + t."""
        return make_mesh(self.vertices @ np.asarray(R).T + np.asarray(t), self.faces)

    def content_hash(self) -> str:
        import hashlib

        m = hashlib.sha256()
        m.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        m.update(np.ascontiguousarray(self.faces, dtype="<i8").tobytes())
        return m.hexdigest()


def make_mesh(vertices, faces) -> Mesh:
    """Validate arrays and build a Mesh, dropping zero-area faces."""
    vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.ascontiguousarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(vertices) == 0 or len(faces) == 0:
        raise MeshError("empty mesh")
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshError("face index out of range")
    if not np.all(np.isfinite(vertices)):
        raise MeshError("non-finite vertex coordinates")
    v = vertices[faces]
    cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    norms = np.linalg.norm(cross, axis=1)
    diag = float(np.linalg.norm(vertices.max(axis=0) - vertices.min(axis=0)))
    keep = norms > 1e-12 * max(diag, 1e-300) ** 2
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropped %d degenerate face(s)", dropped)
    faces = faces[keep]
    if len(faces) == 0:
        raise MeshError("empty mesh after removing degenerate faces")
    normals = cross[keep] / norms[keep, None]
    return Mesh(vertices, faces, normals, dropped)


# ---------------------------------------------------------------------------
# OBJ
# ---------------------------------------------------------------------------

def _read_obj(path) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    # fan triangulation of polygons
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except (ValueError, IndexError) as exc:
                raise MeshError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from exc
    return np.array(verts, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def save_obj(path, mesh_or_parts, names=None) -> None:
    """Write one mesh, or several meshes as named groups, to an OBJ file."""
    parts = mesh_or_parts if isinstance(mesh_or_parts, (list, tuple)) else [mesh_or_parts]
    names = names or [f"part{i}" for i in range(len(parts))]
    offset = 1
    with open(path, "w", encoding="utf-8") as fh:
        for name, m in zip(names, parts):
            fh.write(f"o {name}\n")
            for x, y, z in m.vertices:
                fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
            for a, b, c in m.faces + offset:
                fh.write(f"f {a} {b} {c}\n")
            offset += len(m.vertices)


# ---------------------------------------------------------------------------
# PLY
# ---------------------------------------------------------------------------

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def _parse_ply_header(fh):
    if fh.readline().strip() != b"ply":
        raise MeshError("not a PLY file")
    fmt = None
    elements = []  # (name, count, [(prop, dtype) | (prop, ("list", count_t, item_t))])
    while True:
        line = fh.readline()
        if not line:
            raise MeshError("unterminated PLY header")
        parts = line.decode("ascii", "replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise MeshError("property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], ("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])))
            else:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
        elif parts[0] == "end_header":
            break
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"unsupported PLY format {fmt!r}")
    return fmt, elements


def _read_ply(path):
    with open(path, "rb") as fh:
        try:
            fmt, elements = _parse_ply_header(fh)
        except KeyError as exc:
            raise MeshError(f"unknown PLY property type {exc}") from exc
        body = fh.read()
    data = {}
    if fmt == "ascii":
        tokens = body.split()
        pos = 0
        for name, count, props in elements:
            cols = {p: [] for p, _ in props}
            for _ in range(count):
                for p, t in props:
                    if isinstance(t, tuple):
                        n = int(tokens[pos])
                        cols[p].append([int(x) for x in tokens[pos + 1:pos + 1 + n]])
                        pos += 1 + n
                    else:
                        cols[p].append(float(tokens[pos]))
                        pos += 1
            data[name] = cols
    else:
        pos = 0
        for name, count, props in elements:
            if all(not isinstance(t, tuple) for _, t in props):
                dt = np.dtype([(p, "<" + t) for p, t in props])
                arr = np.frombuffer(body, dtype=dt, count=count, offset=pos)
                pos += dt.itemsize * count
                data[name] = {p: arr[p].astype(np.float64).tolist() for p, _ in props}
                continue
            cols = {p: [] for p, _ in props}
            for _ in range(count):
                for p, t in props:
                    if isinstance(t, tuple):
                        ct, it = np.dtype("<" + t[1]), np.dtype("<" + t[2])
                        n = int(np.frombuffer(body, ct, 1, pos)[0])
                        pos += ct.itemsize
                        cols[p].append(np.frombuffer(body, it, n, pos).tolist())
                        pos += it.itemsize * n
                    else:
                        dt = np.dtype("<" + t)
                        cols[p].append(float(np.frombuffer(body, dt, 1, pos)[0]))
                        pos += dt.itemsize
            data[name] = cols
    if "vertex" not in data:
        raise MeshError("PLY has no vertex element")
    vd = data["vertex"]
    try:
        verts = np.column_stack([vd["x"], vd["y"], vd["z"]]).astype(np.float64)
    except KeyError as exc:
        raise MeshError("PLY vertex element lacks x/y/z") from exc
    faces = []
    fd = data.get("face", {})
    key = "vertex_indices" if "vertex_indices" in fd else ("vertex_index" if "vertex_index" in fd else None)
    if key is not None:
        for idx in fd[key]:
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    props = {p: np.asarray(v, dtype=np.float64) for p, v in vd.items() if p not in ("x", "y", "z")}
    return verts, np.array(faces, dtype=np.int64).reshape(-1, 3), props


def save_ply(path, mesh: Mesh, vertex_props: dict | None = None, binary: bool = True) -> None:
    """Write a PLY file with optional float per-vertex properties (e.g. ``quality``)."""
    vertex_props = vertex_props or {}
    nv, nf = len(mesh.vertices), len(mesh.faces)
    head = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
            f"element vertex {nv}", "property float x", "property float y", "property float z"]
    head += [f"property float {name}" for name in vertex_props]
    head += [f"element face {nf}", "property list uchar int vertex_indices", "end_header"]
    with open(path, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode("ascii"))
        if binary:
            dt = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
                          + [(n, "<f4") for n in vertex_props])
            arr = np.empty(nv, dtype=dt)
            arr["x"], arr["y"], arr["z"] = mesh.vertices.T
            for n, v in vertex_props.items():
                arr[n] = v
            fh.write(arr.tobytes())
            fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
            farr = np.empty(nf, dtype=fdt)
            farr["n"] = 3
            farr["i"] = mesh.faces
            fh.write(farr.tobytes())
        else:
            cols = [mesh.vertices] + [np.asarray(v).reshape(-1, 1) for v in vertex_props.values()]
            for row in np.hstack(cols):
                fh.write((" ".join(f"{x:.9g}" for x in row) + "\n").encode("ascii"))
            for a, b, c in mesh.faces:
                fh.write(f"3 {a} {b} {c}\n".encode("ascii"))


def load_mesh_with_properties(path) -> tuple[Mesh, dict]:
    """Load an OBJ or PLY mesh plus any extra per-vertex PLY properties."""
    if not os.path.exists(path):
        raise MeshError(f"no such file: {path}")
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".obj":
        verts, faces = _read_obj(path)
        props = {}
    elif ext == ".ply":
        try:
            verts, faces, props = _read_ply(path)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, MeshError):
                raise
            raise MeshError(f"{path}: corrupt PLY body") from exc
    else:
        raise MeshError(f"unsupported mesh format {ext!r}")
    return make_mesh(verts, faces), props


def load_mesh(path) -> Mesh:
    return load_mesh_with_properties(path)[0]
