"""Contact maps: labeled surface points, attractive (+1) or repulsive (-1)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry.mesh import Mesh
from .geometry.sampling import SurfaceSamples

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_TAU_T = 0.3
DEFAULT_N_POINTS = 5000

_RECORD = np.dtype([("p", "<f4", (3,)), ("n", "<f4", (3,)), ("c", "i1")])


class ContactMapError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContactMap:
    """Positions and normals are held at float32 precision so files round-trip exactly."""

    positions: np.ndarray
    normals: np.ndarray
    labels: np.ndarray
    tau_t: float | None = None
    source: str = ""
    faces: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float32).astype(np.float64).reshape(-1, 3)
        nrm = np.asarray(self.normals, dtype=np.float32).astype(np.float64).reshape(-1, 3)
        lab = np.asarray(self.labels, dtype=np.int8).reshape(-1)
        if len(pos) < 1:
            raise ContactMapError("contact map needs at least one point")
        if not (len(pos) == len(nrm) == len(lab)):
            raise ContactMapError("positions, normals and labels differ in length")
        if not np.all((lab == 1) | (lab == -1)):
            raise ContactMapError("labels must be +1 or -1")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "labels", lab)
        if not np.any(lab == 1):
            log.warning("contact map has no attractive points")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_attractive(self) -> int:
        return int((self.labels == 1).sum())

    @property
    def n_repulsive(self) -> int:
        return int((self.labels == -1).sum())

    @property
    def attractive(self) -> np.ndarray:
        return self.labels == 1

    def transformed(self, R, t) -> "ContactMap":
        R = np.asarray(R)
        return ContactMap(self.positions @ R.T + t, self.normals @ R.T, self.labels, self.tau_t,
                          self.source, self.faces)

    def summary(self) -> dict:
        return {"N": len(self), "attractive": self.n_attractive, "repulsive": self.n_repulsive,
                "tau_t": self.tau_t, "source": self.source}


@dataclass(frozen=True, eq=False)
class ScalarContactField:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if len(v) != len(self.mesh.vertices):
            raise ContactMapError(f"field has {len(v)} values for {len(self.mesh.vertices)} vertices")
        object.__setattr__(self, "values", np.clip(v, 0.0, 1.0))

    def at(self, samples: SurfaceSamples) -> np.ndarray:
        """Barycentric interpolation of vertex values at surface samples."""
        if samples.faces.max() >= len(self.mesh.faces):
            raise ContactMapError("samples do not belong to this field's mesh")
        vals = self.values[self.mesh.faces[samples.faces]]
        b = samples.barycentric
        # offsets from the first corner keep constant faces exact (t = tau_t stays on the boundary)
        return vals[:, 0] + b[:, 1] * (vals[:, 1] - vals[:, 0]) + b[:, 2] * (vals[:, 2] - vals[:, 0])


def build_contact_map(field: ScalarContactField, samples: SurfaceSamples,
                      tau_t: float = DEFAULT_TAU_T, source: str = "scalar-field") -> ContactMap:
    """Label each sample +1 when the interpolated contact value is >= tau_t, else -1."""
    if not 0.0 < tau_t < 1.0:
        raise ContactMapError("tau_t must lie in (0, 1)")
    t = field.at(samples)
    labels = np.where(t >= tau_t, 1, -1)
    return ContactMap(samples.positions, samples.normals, labels, tau_t, source, samples.faces)


def manual_contact_map(mesh: Mesh, samples: SurfaceSamples, regions, source: str = "manual") -> ContactMap:
    """Label samples by region predicates; later regions win, unlabeled points are repulsive.

    ``regions`` is a sequence of (predicate, label) where the predicate maps an
    (n, 3) array of positions to a boolean mask.
    """
    labels = np.full(len(samples), -1, dtype=np.int8)
    if not regions:
        log.warning("no contact regions given; every point is repulsive")
    for predicate, label in regions:
        if label not in (1, -1):
            raise ContactMapError("region label must be +1 or -1")
        mask = np.asarray(predicate(samples.positions), dtype=bool)
        labels[mask] = label
    return ContactMap(samples.positions, samples.normals, labels, None, source, samples.faces)


# region predicates usable from config files -------------------------------------

def region_predicate(spec: dict):
    """Build a predicate from a dict such as ``{"type": "slab", "axis": 2, "lo": 0.03, "hi": 0.12}``,
    ``{"type": "sphere", "center": [...], "radius": r}`` or ``{"type": "box", "lo": [...], "hi": [...]}``."""
    kind = spec.get("type")
    if kind == "slab":
        axis, lo, hi = int(spec["axis"]), float(spec["lo"]), float(spec["hi"])
        return lambda p: (p[:, axis] >= lo) & (p[:, axis] <= hi)
    if kind == "sphere":
        c, r = np.asarray(spec["center"], float), float(spec["radius"])
        return lambda p: np.linalg.norm(p - c, axis=1) <= r
    if kind == "box":
        lo, hi = np.asarray(spec["lo"], float), np.asarray(spec["hi"], float)
        return lambda p: np.all((p >= lo) & (p <= hi), axis=1)
    if kind == "all":
        return lambda p: np.ones(len(p), dtype=bool)
    raise ContactMapError(f"unknown region type {kind!r}")


# ---------------------------------------------------------------------------
# .contactmap files
# ---------------------------------------------------------------------------

def save_contact_map(cmap: ContactMap, path) -> None:
    source = cmap.source.replace("\n", " ")
    tau = "none" if cmap.tau_t is None else repr(float(cmap.tau_t))
    header = (f"contactmap {FORMAT_VERSION}\nN {len(cmap)}\ntau_t {tau}\n"
              f"source {source}\nend_header\n")
    rec = np.empty(len(cmap), dtype=_RECORD)
    rec["p"] = cmap.positions
    rec["n"] = cmap.normals
    rec["c"] = cmap.labels
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(rec.tobytes())


def load_contact_map(path) -> ContactMap:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw:
        raise ContactMapError(f"{path}: empty file")
    meta, pos = {}, 0
    for _ in range(16):
        end = raw.find(b"\n", pos)
        if end < 0:
            raise ContactMapError(f"{path}: corrupt header")
        line = raw[pos:end].decode("utf-8", "replace")
        pos = end + 1
        if line == "end_header":
            break
        key, _, value = line.partition(" ")
        meta[key] = value
    else:
        raise ContactMapError(f"{path}: header not terminated")
    if "contactmap" not in meta:
        raise ContactMapError(f"{path}: not a contact map")
    if meta["contactmap"].strip() != str(FORMAT_VERSION):
        raise ContactMapError(f"{path}: unsupported version {meta['contactmap']!r}")
    try:
        n = int(meta["N"])
    except (KeyError, ValueError) as exc:
        raise ContactMapError(f"{path}: bad point count") from exc
    if len(raw) - pos != n * _RECORD.itemsize:
        raise ContactMapError(f"{path}: expected {n} records")
    rec = np.frombuffer(raw, dtype=_RECORD, count=n, offset=pos)
    tau = meta.get("tau_t", "none").strip()
    return ContactMap(rec["p"], rec["n"], rec["c"], None if tau == "none" else float(tau),
                      meta.get("source", ""))
