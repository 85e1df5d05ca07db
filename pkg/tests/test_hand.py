from __future__ import annotations

import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspsynth.geometry.mesh import save_obj
from graspsynth.geometry.shapes import box_mesh
from graspsynth.geometry.transforms import axis_rotation, quat_to_matrix, random_rotation
from graspsynth.hand import (HandConfigError, HandPose, check_points_world, closest_segment,
                             forward_kinematics, hand_from_dict, load_hand, pose_distance, rest_pose,
                             segment_sdf_batch, segment_sdf_query, shipped_hands, thumb_point_world)


def toy_config():
    """Sphere palm with two sphere fingertips on one-link fingers."""
    return {
        "name": "toy",
        "palm": "palm",
        "segments": [
            {"name": "palm", "shape": {"kind": "sphere", "radius": 0.03}},
            {"name": "a", "shape": {"kind": "capsule", "a": [0, 0, 0], "b": [0, 0, 0.05], "radius": 0.008}},
            {"name": "a_tip", "shape": {"kind": "sphere", "radius": 0.01}},
            {"name": "b", "shape": {"kind": "capsule", "a": [0, 0, 0], "b": [0, 0, 0.05], "radius": 0.008}},
        ],
        "joints": [
            {"parent": "palm", "child": "a", "origin": [0.02, 0, 0.03], "axis": [0, 1, 0],
             "limits": [-1, 1], "dof": 0},
            {"parent": "a", "child": "a_tip", "origin": [0, 0, 0.05], "axis": [0, 1, 0],
             "limits": [-1, 1], "dof": 1},
            {"parent": "palm", "child": "b", "origin": [-0.02, 0, 0.03], "axis": [0, 1, 0],
             "limits": [-1, 1], "dof": 2},
        ],
        "thumb": {"segment": "b", "point": [0.008, 0, 0.03]},
    }


@pytest.fixture(scope="module")
def toy():
    return hand_from_dict(toy_config())


def chain_oracle(hand, pose):
    """Per-segment transforms by walking each chain from the palm and multiplying 4x4 matrices."""
    def h(R, t):
        M = np.eye(4)
        M[:3, :3], M[:3, 3] = R, t
        return M

    out = []
    for s in range(hand.n_segments):
        chain = []
        a = s
        while a != 0:
            chain.append(hand.joint_of[a])
            a = hand.joint_of[a].parent
        M = h(pose.R, pose.t)
        for j in reversed(chain):
            M = M @ h(j.rotation, j.origin) @ h(axis_rotation(j.axis, pose.d[j.dof]), np.zeros(3))
        out.append(M)
    return out


def random_pose(hand, rng, spread=0.05):
    return HandPose.from_matrix(random_rotation(rng), rng.normal(0, spread, 3),
                                rng.uniform(hand.lower, hand.upper))


# -- loading ---------------------------------------------------------------------------

@pytest.mark.parametrize("name,dofs", [("barrett-like", 4), ("allegro-like", 16), ("human-like", 20)])
def test_shipped_hand_dof_counts(name, dofs):
    hand = load_hand(name)
    assert hand.n_dof == dofs
    assert sorted(j.dof for j in hand.joints) == list(range(dofs))
    assert name in shipped_hands()


def test_barrett_has_three_digits(barrett):
    assert len({s for s in barrett.sites()[0]}) == 3


def test_duplicate_dof_rejected():
    cfg = toy_config()
    cfg["joints"][2]["dof"] = 0
    with pytest.raises(HandConfigError, match="duplicate DOF"):
        hand_from_dict(cfg)


def test_cycle_rejected():
    cfg = toy_config()
    cfg["joints"][0]["parent"] = "a_tip"
    with pytest.raises(HandConfigError, match="cyclic"):
        hand_from_dict(cfg)


@pytest.mark.parametrize("mutate,match", [
    (lambda c: c.pop("thumb"), "thumb"),
    (lambda c: c["thumb"].update(point=[0.05, 0, 0.03]), "surface"),
    (lambda c: c["joints"][0].update(limits=[1, -1]), "lo < hi"),
    (lambda c: c["joints"][0].update(dof=5), "0..D-1"),
    (lambda c: c["joints"][0].update(parent="nowhere"), "unknown"),
    (lambda c: c["segments"].append({"name": "loose", "shape": {"kind": "sphere", "radius": 0.01}}),
     "not connected"),
])
def test_malformed_configs(mutate, match):
    cfg = copy.deepcopy(toy_config())
    mutate(cfg)
    with pytest.raises(HandConfigError, match=match):
        hand_from_dict(cfg)


def test_load_errors(tmp_path):
    with pytest.raises(HandConfigError):
        load_hand(tmp_path / "none.handcfg")
    bad = tmp_path / "bad.handcfg"
    bad.write_text("segments: [unclosed\n")
    with pytest.raises(HandConfigError):
        load_hand(bad)


def test_mesh_segment(tmp_path):
    save_obj(tmp_path / "block.obj", box_mesh([0.02, 0.02, 0.04], [0, 0, 0.02]))
    cfg = toy_config()
    cfg["segments"][3] = {"name": "b", "mesh": "block.obj"}
    cfg["thumb"]["point"] = [0.01, 0, 0.02]
    path = tmp_path / "meshy.handcfg"
    import yaml

    path.write_text(yaml.safe_dump(cfg))
    hand = load_hand(path)
    b = hand.segments[3]
    assert b.mesh is not None
    v, _ = b.query(b.check_points)
    assert np.max(np.abs(v)) <= 2 * hand.spacing


def test_segments_ordered_palm_first(toy):
    assert toy.segments[0].name == "palm"
    assert all(j.parent < j.child for j in toy.joints)


def test_check_points_on_surface(barrett):
    for seg in barrett.segments:
        assert len(seg.check_points) == 50
        v, _ = seg.query(seg.check_points)
        assert np.max(np.abs(v)) <= 2 * barrett.spacing


def test_self_pairs_exclude_adjacent(toy):
    pairs = {tuple(p) for p in toy.self_pairs}
    assert (1, 0) not in pairs and (0, 1) not in pairs
    assert (1, 2) not in pairs
    assert (2, 3) in pairs and (3, 2) in pairs


# -- forward kinematics ---------------------------------------------------------------

def test_rest_pose_gives_rest_transforms(toy):
    Rw, tw = forward_kinematics(toy, rest_pose(toy))
    for j in toy.joints:
        assert np.allclose(Rw[j.child], np.eye(3))
    assert np.allclose(tw[1], [0.02, 0, 0.03])
    assert np.allclose(tw[2], [0.02, 0, 0.08])


def test_distal_joint_moves_only_descendants(toy):
    before = forward_kinematics(toy, rest_pose(toy))
    pose = HandPose(np.array([1.0, 0, 0, 0]), np.zeros(3), [0, 0.3, 0])
    after = forward_kinematics(toy, pose)
    moved = [not np.allclose(before[0][s], after[0][s]) for s in range(toy.n_segments)]
    assert moved == [False, False, True, False]


def test_fk_matches_chain_oracle(rng):
    for name in ("barrett-like", "human-like"):
        hand = load_hand(name)
        for _ in range(5):
            pose = random_pose(hand, rng)
            Rw, tw = forward_kinematics(hand, pose)
            for s, M in enumerate(chain_oracle(hand, pose)):
                assert np.allclose(Rw[s], M[:3, :3], atol=1e-10)
                assert np.allclose(tw[s], M[:3, 3], atol=1e-10)


def test_fk_composition(barrett, rng):
    for _ in range(10):
        pose = random_pose(barrett, rng)
        A, a = random_rotation(rng), rng.normal(0, 0.1, 3)
        Rw, tw = forward_kinematics(barrett, pose)
        Rw2, tw2 = forward_kinematics(barrett, pose.transformed(A, a))
        assert np.allclose(Rw2, A @ Rw, atol=1e-10)
        assert np.allclose(tw2, tw @ A.T + a, atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.permutations(range(4)))
def test_clamp_idempotent_and_order_free(d, perm):
    hand = load_hand("barrett-like")
    d = np.array(d)
    once = hand.clamp(d)
    assert np.array_equal(hand.clamp(once), once)
    perm = np.array(perm)
    assert np.array_equal(np.clip(d[perm], hand.lower[perm], hand.upper[perm]), once[perm])
    assert np.all((once >= hand.lower) & (once <= hand.upper))


def test_pose_quaternion_normalized(rng):
    pose = HandPose(np.array([2.0, 0.0, 0.0, 0.0]), np.zeros(3), np.zeros(0))
    assert np.linalg.norm(pose.q) == pytest.approx(1.0, abs=1e-8)
    delta = np.concatenate([rng.normal(size=6), np.zeros(0)])
    assert np.linalg.norm(pose.retract(delta).q) == pytest.approx(1.0, abs=1e-8)


def test_retract_clamps_joints(barrett):
    pose = rest_pose(barrett).retract(np.r_[np.zeros(6), [10, 10, -10, 10]], barrett)
    assert np.array_equal(pose.d, barrett.clamp([10, 10, -10, 10]))


def test_pose_dict_roundtrip(barrett, rng):
    pose = random_pose(barrett, rng)
    assert HandPose.from_dict(pose.to_dict()).equals(pose)


def test_pose_distance_units():
    a = HandPose(np.array([1.0, 0, 0, 0]), np.zeros(3), [])
    b = HandPose(np.array([1.0, 0, 0, 0]), [0.01, 0, 0], [])
    c = HandPose.from_matrix(axis_rotation(np.array([0, 0, 1.0]), 0.2), np.zeros(3), [])
    assert pose_distance(a, b) == pytest.approx(1.0)
    assert pose_distance(a, c) == pytest.approx(1.0)


# -- segment queries -------------------------------------------------------------------

def test_segment_sdf_query_examples(toy):
    pose = rest_pose(toy)
    v, g = segment_sdf_query(toy, pose, 0, [0.06, 0, 0])
    assert v == pytest.approx(0.03) and np.allclose(g, [1, 0, 0])
    moved = HandPose(pose.q, [0.02, 0, 0], pose.d)
    v, g = segment_sdf_query(toy, moved, 0, [0.06, 0, 0])
    assert v == pytest.approx(0.01) and np.allclose(g, [1, 0, 0])


def test_segment_sdf_matches_transform_then_query(barrett, rng):
    pose = random_pose(barrett, rng)
    Rw, tw = forward_kinematics(barrett, pose)
    p = rng.normal(0, 0.06, size=(100, 3))
    V, G = segment_sdf_batch(barrett, Rw, tw, p)
    for k, seg in enumerate(barrett.segments):
        local = np.array([Rw[k].T @ (x - tw[k]) for x in p])
        v, g = seg.query(local)
        assert np.allclose(V[k], v, atol=1e-12)
        assert np.allclose(G[k], g @ Rw[k].T, atol=1e-12)


def test_closest_segment_tie_goes_to_lower_index():
    cfg = {
        "name": "twins",
        "palm": "palm",
        "segments": [{"name": "palm", "shape": {"kind": "sphere", "radius": 0.005}},
                     {"name": "a", "shape": {"kind": "sphere", "radius": 0.01}},
                     {"name": "b", "shape": {"kind": "sphere", "radius": 0.01}}],
        "joints": [{"parent": "palm", "child": "a", "origin": [0.05, 0, 0.1], "axis": [0, 1, 0],
                    "limits": [-1, 1], "dof": 0},
                   {"parent": "palm", "child": "b", "origin": [-0.05, 0, 0.1], "axis": [0, 1, 0],
                    "limits": [-1, 1], "dof": 1}],
        "thumb": {"segment": "b", "point": [0.01, 0, 0]},
    }
    hand = hand_from_dict(cfg)
    k, v, _ = closest_segment(hand, rest_pose(hand), [0.0, 0.0, 0.1])
    assert k == 1 and v == pytest.approx(0.04)


def test_closest_segment_touching(toy):
    pose = rest_pose(toy)
    k, v, _ = closest_segment(toy, pose, [0.0, 0.0, -0.03])
    assert k == 0 and abs(v) <= 1e-12


def test_closest_segment_bruteforce(barrett, rng):
    pose = random_pose(barrett, rng)
    for p in rng.normal(0, 0.06, size=(200, 3)):
        k, v, _ = closest_segment(barrett, pose, p)
        values = [segment_sdf_query(barrett, pose, j, p)[0] for j in range(barrett.n_segments)]
        assert k == int(np.argmin(values))


def test_closest_segment_rigid_invariance(barrett, rng):
    pose = random_pose(barrett, rng)
    A, a = random_rotation(rng), rng.normal(0, 0.1, 3)
    moved = pose.transformed(A, a)
    for p in rng.normal(0, 0.06, size=(50, 3)):
        k1, v1, g1 = closest_segment(barrett, pose, p)
        k2, v2, g2 = closest_segment(barrett, moved, A @ p + a)
        assert k1 == k2 and v1 == pytest.approx(v2, abs=1e-12)
        assert np.allclose(A @ g1, g2, atol=1e-10)


# -- thumb and check points ----------------------------------------------------------------

def test_thumb_point_examples(toy):
    pose = rest_pose(toy)
    rest = thumb_point_world(toy, pose)
    assert np.allclose(rest, [-0.02 + 0.008, 0, 0.06])
    shifted = HandPose(pose.q, [0.1, -0.2, 0.3], pose.d)
    assert np.allclose(thumb_point_world(toy, shifted), rest + [0.1, -0.2, 0.3])


def test_thumb_point_matches_oracle(barrett, rng):
    for _ in range(5):
        pose = random_pose(barrett, rng)
        M = chain_oracle(barrett, pose)[barrett.thumb_segment]
        assert np.allclose(thumb_point_world(barrett, pose), M[:3, :3] @ barrett.thumb_point + M[:3, 3])


def test_check_points_world_prefix(barrett, rng):
    pose = random_pose(barrett, rng)
    seg_all, pts_all = check_points_world(barrett, pose)
    seg, pts = check_points_world(barrett, pose, 10)
    assert len(pts) == 10 * barrett.n_segments
    assert np.allclose(pts[:10], pts_all[:10])


def test_from_matrix_roundtrip(rng):
    R = random_rotation(rng)
    pose = HandPose.from_matrix(R, np.zeros(3), [])
    assert np.allclose(pose.R, R, atol=1e-12)
    assert np.allclose(quat_to_matrix(pose.q), R, atol=1e-12)
