"""Synthetic evaluation scenarios and scenario manifests.

A manifest is YAML::

    scenarios:
      - name: cylinder-wrap
        object: {shape: cylinder, radius: 0.02, height: 0.15}   # or {mesh: path/to.obj}
        contact: {planted: wrap}                                  # map from the planted grasp
      - name: box-button
        object: {shape: box, extents: [0.06, 0.04, 0.12]}
        contact: {regions: [{type: box, lo: [...], hi: [...], label: 1}]}
        target: {agreement: {coverage: 0.9, tol: 0.003}}

Contact sources are ``planted`` (touch set of a planted grasp), ``regions``
(manual predicates, later wins) or ``field`` (a PLY with a per-vertex scalar,
thresholded at tau_t).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .contact import (ContactMap, ScalarContactField, build_contact_map, manual_contact_map,
                      region_predicate)
from .geometry.mesh import Mesh, load_mesh, load_mesh_with_properties
from .geometry.sampling import sample_surface
from .geometry.shapes import box_mesh, cylinder_mesh, flashlight_mesh, icosphere, mug_mesh
from .hand.kinematics import HandPose, forward_kinematics, segment_sdf_batch
from .hand.model import HandModel
from .objects import ObjectModel, make_object
from .sampler import approach_rotation, close_fingers

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")
TOUCH_TOL = 0.003


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    obj: ObjectModel
    cmap: ContactMap
    planted: HandPose | None = None
    target: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Objects
# ---------------------------------------------------------------------------

def object_mesh(spec: dict, base_dir: str = ".") -> Mesh:
    if "mesh" in spec:
        path = spec["mesh"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_mesh(path)
    kind = spec.get("shape")
    if kind == "cylinder":
        return cylinder_mesh(float(spec.get("radius", 0.02)), float(spec.get("height", 0.15)))
    if kind == "box":
        return box_mesh(spec.get("extents", [0.06, 0.04, 0.12]))
    if kind == "sphere":
        return icosphere(float(spec.get("radius", 0.04)), int(spec.get("subdivisions", 3)))
    if kind == "mug":
        return mug_mesh()
    if kind == "flashlight":
        return flashlight_mesh()
    raise ScenarioError(f"unknown object shape {kind!r}")


# ---------------------------------------------------------------------------
# Planted grasps
# ---------------------------------------------------------------------------

def side_grasp(hand: HandModel, obj: ObjectModel, point, normal, along, standoff: float = 0.0) -> HandPose:
    """Palm against the surface at ``point`` facing ``-normal``, palm x along ``along``, fingers closed."""
    n = np.asarray(normal, float)
    n = n / np.linalg.norm(n)
    R = approach_rotation(hand, -n, 0.0)
    x_now = R[:, 0]
    x_want = np.asarray(along, float) - (np.asarray(along, float) @ n) * n
    x_want /= np.linalg.norm(x_want)
    # roll about the approach axis so palm x lines up with ``along``
    ang = math.atan2(np.cross(x_now, x_want) @ -n, x_now @ x_want)
    R = approach_rotation(hand, -n, ang)
    p = np.asarray(point, float)
    for _ in range(3):  # slide onto the surface along the normal
        v, _ = obj.query(p.reshape(1, 3))
        p = p - v[0] * n
    t = p + (standoff + hand.palm_offset) * n
    return close_fingers(HandPose.from_matrix(R, t, hand.open_posture), obj, hand)


def planted_grasp(kind: str, hand: HandModel, obj: ObjectModel) -> HandPose:
    """Named ground-truth grasps on the synthetic objects."""
    lo, hi = obj.mesh.bounds
    mid = 0.5 * (lo + hi)
    if kind == "wrap":
        # around the z axis at mid height, approaching along +x
        radius = hi[0] - mid[0]
        return side_grasp(hand, obj, [mid[0] + radius, mid[1], mid[2]], [1, 0, 0], [0, 0, 1])
    if kind == "side":
        return side_grasp(hand, obj, [mid[0], hi[1], mid[2]], [0, 1, 0], [0, 0, 1])
    if kind == "top":
        return side_grasp(hand, obj, [mid[0], mid[1], hi[2]], [0, 0, 1], [1, 0, 0])
    raise ScenarioError(f"unknown planted grasp {kind!r}")


def touch_labels(hand: HandModel, pose: HandPose, points, tol: float = TOUCH_TOL) -> np.ndarray:
    """+1 where some hand segment is within ``tol`` of the point, else -1."""
    Rw, tw = forward_kinematics(hand, pose)
    v, _ = segment_sdf_batch(hand, Rw, tw, points)
    return np.where(v.min(axis=0) <= tol, 1, -1).astype(np.int8)


def planted_contact_map(hand: HandModel, pose: HandPose, mesh: Mesh, n_points: int, seed: int,
                        tol: float = TOUCH_TOL) -> ContactMap:
    samples = sample_surface(mesh, n_points, seed)
    labels = touch_labels(hand, pose, samples.positions, tol)
    return ContactMap(samples.positions, samples.normals, labels, None, "planted", samples.faces)


# ---------------------------------------------------------------------------
# Built-in scenarios
# ---------------------------------------------------------------------------

def builtin_specs() -> list[dict]:
    """Five synthetic scenarios: cylinder, box with a button, sphere, mug, flashlight."""
    return [
        {"name": "cylinder", "object": {"shape": "cylinder", "radius": 0.02, "height": 0.15},
         "contact": {"planted": "wrap", "band": [0.03, 0.12]}},
        {"name": "box-button", "object": {"shape": "box", "extents": [0.05, 0.035, 0.11]},
         "contact": {"planted": "side"}},
        {"name": "sphere", "object": {"shape": "sphere", "radius": 0.035},
         "contact": {"planted": "top"}},
        {"name": "mug", "object": {"shape": "mug"}, "contact": {"planted": "wrap"}},
        {"name": "flashlight", "object": {"shape": "flashlight"}, "contact": {"planted": "wrap"}},
    ]


def build_scenario(spec: dict, hand: HandModel, n_points: int = 5000, seed: int = 0,
                   h: float = 0.002, tau_t: float = 0.3, base_dir: str = ".") -> Scenario:
    name = str(spec.get("name", "scenario"))
    try:
        mesh = object_mesh(spec.get("object", {}), base_dir)
    except (OSError, ValueError) as exc:
        raise ScenarioError(f"{name}: {exc}") from exc
    obj = make_object(mesh, h, name=name)
    contact = spec.get("contact", {})
    planted = None
    if "planted" in contact:
        planted = planted_grasp(contact["planted"], hand, obj)
        cmap = planted_contact_map(hand, planted, mesh, n_points, seed)
        if "band" in contact:
            # keep attractive points inside the band only; the rest of the surface repels
            lo, hi = contact["band"]
            z = cmap.positions[:, 2]
            labels = np.where((cmap.labels == 1) & (z >= lo) & (z <= hi), 1, -1)
            cmap = ContactMap(cmap.positions, cmap.normals, labels, None, "planted-band", cmap.faces)
    elif "regions" in contact:
        samples = sample_surface(mesh, n_points, seed)
        regions = [(region_predicate(r), int(r.get("label", 1))) for r in contact["regions"]]
        cmap = manual_contact_map(mesh, samples, regions)
    elif "field" in contact:
        path = contact["field"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        fmesh, props = load_mesh_with_properties(path)
        prop = contact.get("property", "quality")
        if prop not in props:
            raise ScenarioError(f"{name}: {path} has no vertex property {prop!r}")
        samples = sample_surface(fmesh, n_points, seed)
        cmap = build_contact_map(ScalarContactField(fmesh, props[prop]), samples,
                                 float(contact.get("tau_t", tau_t)))
        obj = make_object(fmesh, h, name=name)
    else:
        raise ScenarioError(f"{name}: contact needs 'planted', 'regions' or 'field'")
    return Scenario(name, obj, cmap, planted, dict(spec.get("target", {})))


def load_manifest(path) -> list[dict]:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), list):
        raise ScenarioError(f"{path}: expected a 'scenarios' list")
    return data["scenarios"]
