"""OBJ export of posed hands (forward kinematics baked in), optionally with the object."""

from __future__ import annotations

import math

import numpy as np

from .geometry.mesh import Mesh, save_obj
from .geometry.sdf import PrimitiveShape
from .geometry.shapes import box_mesh, icosphere, lathe
from .geometry.transforms import frame_from_axis
from .hand.kinematics import HandPose, forward_kinematics
from .hand.model import HandModel


def primitive_mesh(shape: PrimitiveShape, segments: int = 16) -> Mesh:
    p = shape.params
    if shape.kind == "sphere":
        return icosphere(p["radius"], 2, p["center"])
    if shape.kind == "box":
        return box_mesh(2 * p["half_extents"], p["center"])
    a, b, r = p["a"], p["b"], p["radius"]
    length = float(np.linalg.norm(b - a))
    # hemispherical ends, lathed about z and then laid along a -> b
    phis = np.linspace(0.15, math.pi / 2, 5)
    profile = [(r * math.sin(f), -r * math.cos(f)) for f in phis]
    profile += [(r * math.sin(f), length + r * math.cos(f)) for f in phis[::-1]]
    m = lathe(profile, segments)
    return m.transformed(frame_from_axis(b - a), a)


def posed_hand_meshes(hand: HandModel, pose: HandPose) -> list[Mesh]:
    Rw, tw = forward_kinematics(hand, pose)
    out = []
    for s, seg in enumerate(hand.segments):
        local = seg.mesh if seg.mesh is not None else primitive_mesh(seg.shape)
        out.append(local.transformed(Rw[s], tw[s]))
    return out


def export_grasp(path, hand: HandModel, pose: HandPose, obj_mesh: Mesh | None = None) -> None:
    parts = posed_hand_meshes(hand, pose)
    names = [seg.name for seg in hand.segments]
    if obj_mesh is not None:
        parts.append(obj_mesh)
        names.append("object")
    save_obj(path, parts, names)
