"""Signed distance fields: analytic primitives and voxel grids built from meshes.

Sign convention everywhere: negative inside, gradient points outward.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .. import backend
from .mesh import Mesh
from .transforms import frame_from_axis

log = logging.getLogger(__name__)

DEFAULT_OBJECT_SPACING = 0.002
DEFAULT_SEGMENT_SPACING = 0.0015
DEFAULT_MAX_NODES = 20_000_000


class SdfError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PrimitiveShape:
    """Sphere, capsule or axis-aligned box in a local frame.

    ``params`` by kind:
      sphere   center (3), radius
      capsule  a (3), b (3), radius
      box      center (3), half_extents (3)
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == "sphere":
            c = np.asarray(self.params.get("center", (0, 0, 0)), dtype=float)
            r = float(self.params["radius"])
            if r <= 0:
                raise SdfError("sphere radius must be > 0")
            object.__setattr__(self, "params", {"center": c, "radius": r})
        elif self.kind == "capsule":
            a = np.asarray(self.params["a"], dtype=float)
            b = np.asarray(self.params["b"], dtype=float)
            r = float(self.params["radius"])
            if r <= 0:
                raise SdfError("capsule radius must be > 0")
            if np.linalg.norm(b - a) <= 0:
                raise SdfError("capsule length must be > 0")
            object.__setattr__(self, "params", {"a": a, "b": b, "radius": r})
        elif self.kind == "box":
            c = np.asarray(self.params.get("center", (0, 0, 0)), dtype=float)
            e = np.asarray(self.params["half_extents"], dtype=float)
            if np.any(e <= 0):
                raise SdfError("box half extents must be > 0")
            object.__setattr__(self, "params", {"center": c, "half_extents": e})
        else:
            raise SdfError(f"unknown primitive kind {self.kind!r}")

    def query(self, points):
        """Values and unit gradients for an (n, 3) array of local points."""
        v, g, _ = self.query_pieces(points)
        return v, g

    def query_pieces(self, points):
        """Like :meth:`query`, plus an id of the smooth piece each point falls in."""
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        pieces = np.zeros(len(p), dtype=np.int64)
        if self.kind == "sphere":
            d = p - self.params["center"]
            n = np.linalg.norm(d, axis=1)
            ok = n > 0
            if ok.all():
                g = d / n[:, None]
            else:
                g = np.tile([0.0, 0.0, 1.0], (len(p), 1))
                g[ok] = d[ok] / n[ok, None]
            return n - self.params["radius"], g, pieces
        if self.kind == "capsule":
            a, b, r = self.params["a"], self.params["b"], self.params["radius"]
            ab = b - a
            s = np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0)
            q = a + s[:, None] * ab
            d = p - q
            n = np.linalg.norm(d, axis=1)
            ok = n > 0
            if ok.all():
                g = d / n[:, None]
            else:
                g = np.tile(frame_from_axis(ab)[:, 0], (len(p), 1))
                g[ok] = d[ok] / n[ok, None]
            pieces[s <= 0] = 1
            pieces[s >= 1] = 2
            return n - r, g, pieces
        c, e = self.params["center"], self.params["half_extents"]
        d = p - c
        sgn = np.where(d >= 0, 1.0, -1.0)
        q = np.abs(d) - e
        qp = np.maximum(q, 0.0)
        outer = np.linalg.norm(qp, axis=1)
        inner = np.minimum(q.max(axis=1), 0.0)
        value = outer + inner
        g = np.zeros_like(p)
        out = outer > 0
        g[out] = sgn[out] * qp[out] / outer[out, None]
        k = np.argmax(q, axis=1)
        ins = ~out
        rows = np.nonzero(ins)[0]
        g[rows, k[ins]] = sgn[rows, k[ins]]
        pieces[ins] = 1 + 2 * k[ins] + (sgn[rows, k[ins]] > 0)
        return value, g, pieces

    def sample_surface(self, n: int, rng: np.random.Generator):
        """Random surface points and outward normals, area-uniform."""
        if self.kind == "sphere":
            v = rng.normal(size=(n, 3))
            v /= np.linalg.norm(v, axis=1)[:, None]
            return self.params["center"] + self.params["radius"] * v, v
        if self.kind == "capsule":
            a, b, r = self.params["a"], self.params["b"], self.params["radius"]
            ab = b - a
            L = float(np.linalg.norm(ab))
            F = frame_from_axis(ab)
            side_area = 2 * math.pi * r * L
            cap_area = 4 * math.pi * r * r
            on_side = rng.random(n) < side_area / (side_area + cap_area)
            pts = np.empty((n, 3))
            nrm = np.empty((n, 3))
            ns = int(on_side.sum())
            phi = rng.random(ns) * 2 * math.pi
            s = rng.random(ns)
            radial = np.outer(np.cos(phi), F[:, 0]) + np.outer(np.sin(phi), F[:, 1])
            pts[on_side] = a + np.outer(s, ab) + r * radial
            nrm[on_side] = radial
            nc = n - ns
            v = rng.normal(size=(nc, 3))
            v /= np.linalg.norm(v, axis=1)[:, None]
            base = np.where((v @ ab)[:, None] >= 0, b, a)
            pts[~on_side] = base + r * v
            nrm[~on_side] = v
            return pts, nrm
        c, e = self.params["center"], self.params["half_extents"]
        areas = np.array([e[1] * e[2], e[1] * e[2], e[0] * e[2], e[0] * e[2], e[0] * e[1], e[0] * e[1]])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        u = rng.uniform(-1, 1, size=(n, 3)) * e
        axis = face // 2
        sign = np.where(face % 2 == 0, 1.0, -1.0)
        u[np.arange(n), axis] = sign * e[axis]
        nrm = np.zeros((n, 3))
        nrm[np.arange(n), axis] = sign
        return c + u, nrm

    def bounds(self):
        if self.kind == "sphere":
            r = self.params["radius"]
            return self.params["center"] - r, self.params["center"] + r
        if self.kind == "capsule":
            a, b, r = self.params["a"], self.params["b"], self.params["radius"]
            return np.minimum(a, b) - r, np.maximum(a, b) + r
        c, e = self.params["center"], self.params["half_extents"]
        return c - e, c + e

    def to_dict(self) -> dict:
        return {"kind": self.kind, **{k: (v.tolist() if isinstance(v, np.ndarray) else v)
                                      for k, v in self.params.items()}}


# ---------------------------------------------------------------------------
# Voxel grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SdfGrid:
    origin: np.ndarray
    h: float
    values: np.ndarray = field(repr=False)
    watertight: bool = True

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(x) for x in self.values.shape)

    @property
    def upper(self) -> np.ndarray:
        return self.origin + self.h * (np.array(self.dims) - 1)

    def query(self, points):
        v, g, _, _ = self.query_full(points)
        return v, g

    def query_full(self, points):
        """Values, gradients, outside-extent flags and interpolation cell ids.

        Outside the extent the value is the clamped-point value plus the
        distance to the extent, which keeps the far field smooth.
        """
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return backend.trilinear(self.values, self.origin, self.h, pts)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<4d3i", *self.origin, self.h, *self.dims))
            fh.write(np.ascontiguousarray(self.values, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "SdfGrid":
        with open(path, "rb") as fh:
            raw = fh.read()
        head = struct.calcsize("<4d3i")
        if len(raw) < head:
            raise SdfError(f"{path}: truncated header")
        *origin, h, nx, ny, nz = struct.unpack_from("<4d3i", raw)
        count = nx * ny * nz
        if min(nx, ny, nz) < 2 or h <= 0 or len(raw) != head + 4 * count:
            raise SdfError(f"{path}: corrupt grid")
        vals = np.frombuffer(raw, dtype="<f4", count=count, offset=head).astype(np.float64)
        return cls(np.array(origin, dtype=np.float64), float(h), vals.reshape(nx, ny, nz))


def is_watertight(mesh: Mesh) -> bool:
    """Every undirected edge shared by exactly two faces."""
    e = np.sort(mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


def mesh_signed_distance(mesh: Mesh, points) -> np.ndarray:
    """Exact signed distance for arbitrary points (winding-number sign)."""
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    dist, _ = backend.triangle_distances(pts, mesh.vertices, mesh.faces)
    w = backend.winding_numbers(pts, mesh.vertices, mesh.faces)
    return np.where(w > 0.5, -dist, dist)


def build_sdf_grid(mesh: Mesh, h: float = DEFAULT_OBJECT_SPACING, padding: float | None = None,
                   max_nodes: int = DEFAULT_MAX_NODES) -> SdfGrid:
    if h <= 0:
        raise SdfError("grid spacing must be > 0")
    if padding is None:
        padding = 5 * h
    padding = max(padding, 2 * h)
    lo, hi = mesh.bounds
    origin = lo - padding
    dims = np.ceil((hi - lo + 2 * padding) / h).astype(np.int64) + 1
    if int(np.prod(dims)) > max_nodes:
        raise SdfError(f"grid of {tuple(dims)} nodes exceeds cap of {max_nodes}")
    watertight = is_watertight(mesh)
    if not watertight:
        log.warning("mesh is not watertight; sign taken from winding numbers")
    axes = [origin[i] + h * np.arange(dims[i]) for i in range(3)]
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    nodes = np.ascontiguousarray(nodes)
    dist, _ = backend.triangle_distances(nodes, mesh.vertices, mesh.faces)
    dist = dist.reshape(tuple(dims))

    # A node farther than h from the surface shares its sign with all six
    # neighbours, so winding numbers are only needed near the surface and
    # once per connected far region (watertight meshes only).
    sign = np.zeros(tuple(dims))
    # a hole would let one far region leak from inside to outside
    near = dist <= h if watertight else np.ones(tuple(dims), dtype=bool)
    near_idx = np.nonzero(near.ravel())[0]
    if len(near_idx):
        w = backend.winding_numbers(np.ascontiguousarray(nodes[near_idx]), mesh.vertices, mesh.faces)
        sign.ravel()[near_idx] = np.where(w > 0.5, -1.0, 1.0)
    labels, n_regions = ndimage.label(~near)
    if n_regions:
        _, first = np.unique(labels.ravel(), return_index=True)
        reps = first[-n_regions:]
        w = backend.winding_numbers(np.ascontiguousarray(nodes[reps]), mesh.vertices, mesh.faces)
        region_sign = np.concatenate([[0.0], np.where(w > 0.5, -1.0, 1.0)])
        far = ~near
        sign[far] = region_sign[labels[far]]
    values = (sign * dist).astype(np.float32).astype(np.float64)
    return SdfGrid(origin, float(h), values, watertight)


def sdf_query(field, p):
    """(value, gradient) of a grid or primitive at a single point."""
    v, g = field.query(np.asarray(p, dtype=np.float64).reshape(1, 3))
    return float(v[0]), g[0]
