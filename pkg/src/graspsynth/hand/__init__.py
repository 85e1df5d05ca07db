"""Articulated hand models: config loading, kinematics and posed SDF queries."""

from .kinematics import (HandPose, check_points_world, closest_segment, forward_kinematics,
                         joint_frames, pose_distance, rest_pose, segment_sdf_batch, segment_sdf_query,
                         thumb_point_world)
from .model import HandConfigError, HandModel, HandSegment, Joint, hand_from_dict, load_hand, shipped_hands

__all__ = [
    "HandConfigError", "HandModel", "HandPose", "HandSegment", "Joint", "check_points_world",
    "closest_segment", "forward_kinematics", "hand_from_dict", "joint_frames", "load_hand",
    "pose_distance", "rest_pose", "segment_sdf_batch", "segment_sdf_query", "shipped_hands",
    "thumb_point_world",
]
