"""Hand poses, forward kinematics and posed-segment SDF queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry.transforms import (axis_angle_to_quat, axis_rotation, quat_multiply, quat_normalize,
                                   quat_to_matrix, rotation_angle)
from .model import HandModel


@dataclass(frozen=True, eq=False)
class HandPose:
    """Palm rotation (unit quaternion w, x, y, z), palm translation and joint values."""

    q: np.ndarray
    t: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", quat_normalize(self.q))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=np.float64).reshape(-1))

    @classmethod
    def from_matrix(cls, R, t, d) -> "HandPose":
        from ..geometry.transforms import matrix_to_quat

        return cls(matrix_to_quat(R), t, d)

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def clamped(self, hand: HandModel) -> "HandPose":
        return HandPose(self.q, self.t, hand.clamp(self.d))

    def retract(self, delta, hand: HandModel | None = None) -> "HandPose":
        """Apply an increment (dt, dw, dd); rotation is left-multiplied by exp(dw)."""
        delta = np.asarray(delta, dtype=np.float64)
        q = quat_multiply(axis_angle_to_quat(delta[3:6]), self.q)
        pose = HandPose(q, self.t + delta[:3], self.d + delta[6:])
        return pose.clamped(hand) if hand is not None else pose

    def transformed(self, R, t) -> "HandPose":
        """Pose of the same hand after applying the world rigid map x -> R x + t."""
        from ..geometry.transforms import matrix_to_quat

        return HandPose(matrix_to_quat(np.asarray(R) @ self.R), np.asarray(R) @ self.t + t, self.d)

    def to_dict(self) -> dict:
        return {"q": self.q.tolist(), "t": self.t.tolist(), "d": self.d.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "HandPose":
        return cls(np.array(data["q"]), np.array(data["t"]), np.array(data["d"]))

    def equals(self, other: "HandPose") -> bool:
        return (np.array_equal(self.q, other.q) and np.array_equal(self.t, other.t)
                and np.array_equal(self.d, other.d))


def pose_distance(a: HandPose, b: HandPose, trans_scale: float = 0.01, rot_scale: float = 0.2) -> float:
    """Combined palm distance: translation in units of ``trans_scale`` plus
    rotation angle in units of ``rot_scale``."""
    return float(np.linalg.norm(a.t - b.t) / trans_scale + rotation_angle(a.R, b.R) / rot_scale)


def forward_kinematics(hand: HandModel, pose: HandPose):
    """World rotations (S, 3, 3) and translations (S, 3) of every segment."""
    S = hand.n_segments
    Rw = np.empty((S, 3, 3))
    tw = np.empty((S, 3))
    Rw[0] = pose.R
    tw[0] = pose.t
    for s in range(1, S):
        j = hand.joint_of[s]
        p = j.parent
        Rw[s] = Rw[p] @ j.rotation @ axis_rotation(j.axis, pose.d[j.dof])
        tw[s] = Rw[p] @ j.origin + tw[p]
    return Rw, tw


def joint_frames(hand: HandModel, Rw, tw):
    """World axis (D, 3) and origin (D, 3) of every DOF's joint."""
    axes = np.zeros((hand.n_dof, 3))
    origins = np.zeros((hand.n_dof, 3))
    for j in hand.joints:
        axes[j.dof] = Rw[j.child] @ j.axis
        origins[j.dof] = tw[j.child]
    return axes, origins


def to_world(Rw, tw, seg, local) -> np.ndarray:
    seg = np.asarray(seg)
    return np.einsum("nij,nj->ni", Rw[seg], np.atleast_2d(local)) + tw[seg]


def segment_sdf_batch(hand: HandModel, Rw, tw, points, segments=None, pieces: bool = False):
    """SDF of each listed segment at each world point.

    Returns values (K, n) and world gradients (K, n, 3) for the K segments,
    plus smooth-piece ids when ``pieces`` is set.
    """
    segments = range(hand.n_segments) if segments is None else segments
    pts = np.atleast_2d(points)
    vals, grads, ids = [], [], []
    for k in segments:
        local = (pts - tw[k]) @ Rw[k]
        shape = hand.segments[k].shape
        if pieces:
            if hasattr(shape, "query_pieces"):
                v, g, pc = shape.query_pieces(local)
            else:
                v, g, _, pc = shape.query_full(local)
            ids.append(pc)
        else:
            v, g = shape.query(local)
        vals.append(v)
        grads.append(g @ Rw[k].T)
    if pieces:
        return np.array(vals), np.array(grads), np.array(ids)
    return np.array(vals), np.array(grads)


def segment_sdf_query(hand: HandModel, pose: HandPose, k: int, p):
    Rw, tw = forward_kinematics(hand, pose)
    v, g = segment_sdf_batch(hand, Rw, tw, np.asarray(p, dtype=float).reshape(1, 3), [k])
    return float(v[0, 0]), g[0, 0]


def closest_segment(hand: HandModel, pose: HandPose, p):
    """(segment index, value, world gradient) of the nearest segment; ties go to the lowest index."""
    Rw, tw = forward_kinematics(hand, pose)
    v, g = segment_sdf_batch(hand, Rw, tw, np.asarray(p, dtype=float).reshape(1, 3))
    k = int(np.argmin(v[:, 0]))
    return k, float(v[k, 0]), g[k, 0]


def thumb_point_world(hand: HandModel, pose: HandPose) -> np.ndarray:
    Rw, tw = forward_kinematics(hand, pose)
    return Rw[hand.thumb_segment] @ hand.thumb_point + tw[hand.thumb_segment]


def check_points_world(hand: HandModel, pose: HandPose, n: int | None = None):
    """World positions of every segment's check points (first ``n`` per segment)."""
    Rw, tw = forward_kinematics(hand, pose)
    seg, pts = [], []
    for s, part in enumerate(hand.segments):
        cp = part.check_points if n is None else part.check_points[:n]
        seg.append(np.full(len(cp), s))
        pts.append(cp @ Rw[s].T + tw[s])
    return np.concatenate(seg), np.vstack(pts)


def rest_pose(hand: HandModel) -> HandPose:
    return HandPose(np.array([1.0, 0, 0, 0]), np.zeros(3), np.zeros(hand.n_dof))
