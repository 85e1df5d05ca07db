"""Articulated hand models loaded from ``.handcfg`` files.

A ``.handcfg`` is YAML::

    name: barrett-like
    palm: palm                  # root segment
    approach: [0, 0, 1]         # palm-local approach axis
    palm_offset: 0.012          # palm origin to palm surface along approach
    segments:
      - name: palm
        shape: {kind: box, center: [0, 0, 0], half_extents: [0.045, 0.045, 0.012]}
      - name: f1
        shape: {kind: capsule, a: [0, 0, 0.01], b: [0, 0, 0.08], radius: 0.009}
        pad_normal: [0, -1, 0]  # optional; marks desired-contact sites
      - name: grip
        mesh: grip.obj          # grid SDF built from a mesh (path relative to cfg)
    joints:
      - {parent: palm, child: f1, origin: [0.025, 0.035, 0.012], axis: [1, 0, 0],
         limits: [-0.3, 1.9], dof: 0, close: 1, open: 0.0}
    thumb: {segment: f3, point: [0, 0.009, 0.07]}
    pad_cos: 0.7                # site normals within this cosine of pad_normal
    pad_distal: 0.33            # sites on the outer third of each pad segment
    ignore_pairs: [[palm, f1]]  # extra self-collision exclusions

``origin`` and the optional ``rotation`` quaternion place the joint frame in
the parent frame at rest; the child rotates about ``axis`` (joint frame)
by its DOF value.  ``close`` is the closing direction (+1, -1, or 0 for
DOFs such as spread that finger closing leaves alone).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import yaml

from ..geometry.mesh import Mesh, load_mesh
from ..geometry.sampling import farthest_point_indices, sample_surface
from ..geometry.sdf import DEFAULT_SEGMENT_SPACING, PrimitiveShape, SdfGrid, build_sdf_grid
from ..geometry.transforms import quat_normalize, quat_to_matrix

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


class HandConfigError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HandSegment:
    name: str
    shape: PrimitiveShape | SdfGrid
    check_points: np.ndarray = field(repr=False)
    check_normals: np.ndarray = field(repr=False)
    pad_normal: np.ndarray | None = None
    mesh: Mesh | None = field(default=None, repr=False)

    def query(self, local_points):
        return self.shape.query(local_points)


@dataclass(frozen=True)
class Joint:
    parent: int
    child: int
    origin: np.ndarray
    rotation: np.ndarray
    axis: np.ndarray
    limits: tuple[float, float]
    dof: int
    close: int = 0
    open: float = 0.0


@dataclass(frozen=True, eq=False)
class HandModel:
    name: str
    segments: list[HandSegment]
    joints: list[Joint]
    thumb_segment: int
    thumb_point: np.ndarray
    approach: np.ndarray
    palm_offset: float
    ignore_pairs: frozenset = frozenset()
    spacing: float = DEFAULT_SEGMENT_SPACING
    pad_cos: float = 0.7
    pad_distal: float = 1.0 / 3.0

    @property
    def n_dof(self) -> int:
        return len(self.joints)

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @cached_property
    def parent(self) -> np.ndarray:
        p = np.full(self.n_segments, -1, dtype=np.int64)
        for j in self.joints:
            p[j.child] = j.parent
        return p

    @cached_property
    def joint_of(self) -> dict[int, Joint]:
        return {j.child: j for j in self.joints}

    @cached_property
    def segment_dof(self) -> np.ndarray:
        d = np.full(self.n_segments, -1, dtype=np.int64)
        for j in self.joints:
            d[j.child] = j.dof
        return d

    @cached_property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self._limits_by_dof()])

    @cached_property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self._limits_by_dof()])

    def _limits_by_dof(self):
        lim = [None] * self.n_dof
        for j in self.joints:
            lim[j.dof] = j.limits
        return lim

    @cached_property
    def open_posture(self) -> np.ndarray:
        d = np.zeros(self.n_dof)
        for j in self.joints:
            d[j.dof] = j.open
        return np.clip(d, self.lower, self.upper)

    @cached_property
    def moves(self) -> np.ndarray:
        """moves[s, k] is True when DOF k moves segment s."""
        m = np.zeros((self.n_segments, self.n_dof), dtype=bool)
        for s in range(self.n_segments):
            a = s
            while self.parent[a] >= 0:
                m[s, self.segment_dof[a]] = True
                a = self.parent[a]
        return m

    @cached_property
    def descendants(self) -> list[list[int]]:
        out = [[s] for s in range(self.n_segments)]
        for s in range(self.n_segments):
            a = self.parent[s]
            while a >= 0:
                out[a].append(s)
                a = self.parent[a]
        return [sorted(x) for x in out]

    @cached_property
    def self_pairs(self) -> np.ndarray:
        """(j, k) pairs checked for self-intersection: check points of j vs SDF of k."""
        pairs = []
        for j in range(self.n_segments):
            for k in range(self.n_segments):
                if j == k or self.parent[j] == k or self.parent[k] == j:
                    continue
                if frozenset((j, k)) in self.ignore_pairs:
                    continue
                pairs.append((j, k))
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)

    @cached_property
    def closing_order(self) -> list[int]:
        """Segments whose joint closes, root-to-tip per finger (depth-first)."""
        children = [[] for _ in range(self.n_segments)]
        for j in self.joints:
            children[j.parent].append(j.child)
        order, stack = [], [0]
        while stack:
            s = stack.pop()
            if s != 0 and self.joint_of[s].close != 0:
                order.append(s)
            stack.extend(reversed(children[s]))
        return order

    def sites(self):
        """Desired-contact sites: (segment, local point, local outward pad normal)."""
        seg, pts, nrm = [], [], []
        for s, part in enumerate(self.segments):
            if part.pad_normal is None:
                continue
            # pad-facing points on the distal part (farthest from the joint)
            reach = np.linalg.norm(part.check_points, axis=1)
            cut = reach.max() - self.pad_distal * (reach.max() - reach.min())
            sel = (part.check_normals @ part.pad_normal >= self.pad_cos) & (reach >= cut)
            for p in part.check_points[sel]:
                seg.append(s)
                pts.append(p)
                nrm.append(part.pad_normal)
        return (np.array(seg, dtype=np.int64), np.array(pts).reshape(-1, 3),
                np.array(nrm).reshape(-1, 3))

    def clamp(self, d) -> np.ndarray:
        return np.clip(np.asarray(d, dtype=np.float64), self.lower, self.upper)

    def kernel_arrays(self) -> dict:
        """Flat arrays consumed by the compiled energy kernel."""
        S = self.n_segments
        jorigin = np.zeros((S, 3))
        jrot = np.tile(np.eye(3), (S, 1, 1))
        axis = np.zeros((S, 3))
        for j in self.joints:
            jorigin[j.child] = j.origin
            jrot[j.child] = j.rotation
            axis[j.child] = j.axis
        cp_seg = np.concatenate([np.full(len(p.check_points), s) for s, p in enumerate(self.segments)])
        cp_local = np.vstack([p.check_points for p in self.segments])
        offsets = np.concatenate([[0], np.cumsum([len(p.check_points) for p in self.segments])])
        site_seg, site_local, site_normal = self.sites()
        close_dof, close_dir, close_limit, ptr, pts = [], [], [], [0], []
        for s in self.closing_order:
            j = self.joint_of[s]
            close_dof.append(j.dof)
            close_dir.append(float(np.sign(j.close)))
            close_limit.append(j.limits[1] if j.close > 0 else j.limits[0])
            for t in self.descendants[s]:
                pts.extend(range(offsets[t], offsets[t + 1]))
            ptr.append(len(pts))
        return {
            "parent": self.parent.astype(np.int32),
            "dof": self.segment_dof.astype(np.int32),
            "joint_origin": jorigin,
            "joint_rot": jrot,
            "axis": axis,
            "cp_local": cp_local,
            "cp_seg": cp_seg.astype(np.int32),
            "site_local": site_local,
            "site_normal": site_normal,
            "site_seg": site_seg.astype(np.int32),
            "close_dof": np.array(close_dof, dtype=np.int32),
            "close_dir": np.array(close_dir, dtype=np.float64),
            "close_limit": np.array(close_limit, dtype=np.float64),
            "close_ptr": np.array(ptr, dtype=np.int32),
            "close_pts": np.array(pts, dtype=np.int32),
            "n_dof": self.n_dof,
        }


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _vec(x, n=3, what="vector"):
    try:
        v = np.asarray(x, dtype=np.float64).reshape(n)
    except (TypeError, ValueError) as exc:
        raise HandConfigError(f"bad {what}: {x!r}") from exc
    return v


def _unit(x, what):
    v = _vec(x, 3, what)
    n = np.linalg.norm(v)
    if n == 0:
        raise HandConfigError(f"{what} must be non-zero")
    return v / n


def _segment_from_config(entry: dict, base_dir: str, n_check: int, seed: int, spacing: float):
    rng = np.random.default_rng(seed)
    mesh = None
    if "shape" in entry:
        try:
            shape = PrimitiveShape(entry["shape"]["kind"],
                                   {k: v for k, v in entry["shape"].items() if k != "kind"})
        except (KeyError, TypeError) as exc:
            raise HandConfigError(f"segment {entry.get('name')!r}: bad shape") from exc
        pts, nrm = shape.sample_surface(4000, rng)
    elif "mesh" in entry:
        mesh = load_mesh(os.path.join(base_dir, entry["mesh"]))
        shape = build_sdf_grid(mesh, float(entry.get("spacing", spacing)))
        samples = sample_surface(mesh, 4000, seed)
        pts, nrm = samples.positions, samples.normals
    else:
        raise HandConfigError(f"segment {entry.get('name')!r} needs a shape or mesh")
    idx = farthest_point_indices(pts, n_check)
    pad = entry.get("pad_normal")
    return HandSegment(
        name=str(entry["name"]),
        shape=shape,
        check_points=pts[idx],
        check_normals=nrm[idx],
        pad_normal=None if pad is None else _unit(pad, "pad_normal"),
        mesh=mesh,
    )


def hand_from_dict(cfg: dict, base_dir: str = ".", n_check: int = 50) -> HandModel:
    if not isinstance(cfg, dict):
        raise HandConfigError("hand config must be a mapping")
    try:
        seg_entries = list(cfg["segments"])
        joint_entries = list(cfg.get("joints", []))
        palm_name = cfg.get("palm", seg_entries[0]["name"])
    except (KeyError, IndexError, TypeError) as exc:
        raise HandConfigError("hand config needs 'segments'") from exc
    names = [str(e.get("name")) for e in seg_entries]
    if len(set(names)) != len(names):
        raise HandConfigError("duplicate segment names")
    if palm_name not in names:
        raise HandConfigError(f"palm {palm_name!r} is not a segment")

    parent_of = {}
    for je in joint_entries:
        try:
            p, c = str(je["parent"]), str(je["child"])
        except KeyError as exc:
            raise HandConfigError("joint needs parent and child") from exc
        if p not in names or c not in names:
            raise HandConfigError(f"joint {p}->{c} references an unknown segment")
        if c in parent_of:
            raise HandConfigError(f"segment {c!r} has two parent joints")
        if c == palm_name:
            raise HandConfigError("the palm cannot be a joint child")
        parent_of[c] = p
    for n in names:
        seen = {n}
        a = n
        while a in parent_of:
            a = parent_of[a]
            if a in seen:
                raise HandConfigError(f"cyclic joint graph through {a!r}")
            seen.add(a)
        if a != palm_name:
            raise HandConfigError(f"segment {n!r} is not connected to the palm")

    # stable topological order: palm first, parents before children
    order, placed = [palm_name], {palm_name}
    while len(order) < len(names):
        for n in names:
            if n not in placed and parent_of.get(n) in placed:
                order.append(n)
                placed.add(n)
    index = {n: i for i, n in enumerate(order)}
    by_name = dict(zip(names, seg_entries))

    spacing = float(cfg.get("spacing", DEFAULT_SEGMENT_SPACING))
    segments = [_segment_from_config(by_name[n], base_dir, n_check, 1000 + i, spacing)
                for i, n in enumerate(order)]

    joints, dofs = [], []
    for je in joint_entries:
        lim = tuple(float(x) for x in je.get("limits", (-np.pi, np.pi)))
        if len(lim) != 2 or not lim[0] < lim[1]:
            raise HandConfigError(f"joint {je['child']!r}: limits must satisfy lo < hi")
        if "dof" not in je:
            raise HandConfigError(f"joint {je['child']!r} lacks a dof index")
        dof = int(je["dof"])
        dofs.append(dof)
        rot = quat_to_matrix(quat_normalize(_vec(je.get("rotation", (1, 0, 0, 0)), 4, "rotation")))
        joints.append(Joint(
            parent=index[str(je["parent"])],
            child=index[str(je["child"])],
            origin=_vec(je.get("origin", (0, 0, 0)), 3, "origin"),
            rotation=rot,
            axis=_unit(je["axis"], "axis"),
            limits=lim,
            dof=dof,
            close=int(np.sign(je.get("close", 0))),
            open=float(je.get("open", 0.0)),
        ))
    if len(set(dofs)) != len(dofs):
        raise HandConfigError("duplicate DOF index")
    if sorted(dofs) != list(range(len(dofs))):
        raise HandConfigError("DOF indices must be 0..D-1")
    joints.sort(key=lambda j: j.child)

    thumb = cfg.get("thumb")
    if not thumb or "segment" not in thumb or "point" not in thumb:
        raise HandConfigError("missing thumb point")
    if thumb["segment"] not in index:
        raise HandConfigError(f"thumb segment {thumb['segment']!r} unknown")
    t_seg = index[thumb["segment"]]
    t_pt = _vec(thumb["point"], 3, "thumb point")
    v, _ = segments[t_seg].query(t_pt.reshape(1, 3))
    if abs(v[0]) > 2 * spacing:
        raise HandConfigError(f"thumb point is {v[0]:.4f} m from its segment surface")

    ignore = set()
    for pair in cfg.get("ignore_pairs", []) or []:
        a, b = pair
        if a not in index or b not in index:
            raise HandConfigError(f"ignore pair {pair!r} names an unknown segment")
        ignore.add(frozenset((index[a], index[b])))

    return HandModel(
        name=str(cfg.get("name", "hand")),
        segments=segments,
        joints=joints,
        thumb_segment=t_seg,
        thumb_point=t_pt,
        approach=_unit(cfg.get("approach", (0, 0, 1)), "approach"),
        palm_offset=float(cfg.get("palm_offset", 0.0)),
        ignore_pairs=frozenset(ignore),
        spacing=spacing,
        pad_cos=float(cfg.get("pad_cos", 0.7)),
        pad_distal=float(cfg.get("pad_distal", 1.0 / 3.0)),
    )


def load_hand(path, n_check: int = 50) -> HandModel:
    """Load a ``.handcfg`` file; bare names resolve to the shipped hands."""
    path = str(path)
    if not os.path.exists(path):
        shipped = os.path.join(DATA_DIR, path if path.endswith(".handcfg") else path + ".handcfg")
        if os.path.exists(shipped):
            path = shipped
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise HandConfigError(f"cannot read hand config {path}") from exc
    except yaml.YAMLError as exc:
        raise HandConfigError(f"malformed hand config {path}: {exc}") from exc
    return hand_from_dict(cfg, os.path.dirname(os.path.abspath(path)), n_check)


def shipped_hands() -> list[str]:
    return sorted(f[:-8] for f in os.listdir(DATA_DIR) if f.endswith(".handcfg"))
