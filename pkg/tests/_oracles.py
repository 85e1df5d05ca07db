"""Slow reference implementations used by several test modules."""

from __future__ import annotations

import numpy as np

from graspsynth.geometry.transforms import axis_angle_to_quat, quat_multiply
from graspsynth.hand import HandPose, check_points_world, segment_sdf_query, thumb_point_world


def naive_objective(hand, obj, cmap, cfg, pose) -> dict:
    """Point-by-point evaluation with no batching or caching."""
    att = rep = 0.0
    for p, n, c in zip(cmap.positions, cmap.normals, cmap.labels):
        best_v, best_g = np.inf, None
        for k in range(hand.n_segments):
            v, g = segment_sdf_query(hand, pose, k, p)
            if v < best_v:
                best_v, best_g = v, g
        if c == 1:
            att += cfg.lambda_a * best_v ** 2
        else:
            align = abs(best_g @ n) / max(np.linalg.norm(best_g), 1e-300)
            if align > cfg.tau_n and best_v < cfg.delta_r:
                rep += cfg.lambda_r * (cfg.delta_r - best_v) ** 2
    tv, _ = obj.query(thumb_point_world(hand, pose).reshape(1, 3))
    thumb = cfg.lambda_t * float(tv[0]) ** 2
    seg, pts = check_points_world(hand, pose, cfg.n_int)
    inter_obj = 0.0
    for x in pts:
        v, _ = obj.query(x.reshape(1, 3))
        inter_obj += cfg.lambda_i * max(0.0, -float(v[0])) ** 2
    inter_self = 0.0
    for j, k in hand.self_pairs:
        for x in pts[seg == j]:
            v, _ = segment_sdf_query(hand, pose, int(k), x)
            inter_self += cfg.lambda_i * max(0.0, -v) ** 2
    total = att + rep + thumb + inter_obj + inter_self
    return {"attractive": att, "repulsive": rep, "thumb": thumb, "intersection_object": inter_obj,
            "intersection_self": inter_self, "total": total}


def perturbed(pose: HandPose, hand, rng, trans=0.004, rot=0.08, joint=0.15) -> HandPose:
    q = quat_multiply(axis_angle_to_quat(rng.normal(0, rot, 3)), pose.q)
    d = np.clip(pose.d + rng.normal(0, joint, hand.n_dof), hand.lower + 0.02, hand.upper - 0.02)
    return HandPose(q, pose.t + rng.normal(0, trans, 3), d)


def fd_check(f, pose: HandPose, step: float = 1e-6):
    """(max relative error over activation-stable nonzero rows, number of such rows)."""
    r0, J = f.linearize(pose)
    sig0 = f.signature(pose)
    stable = np.ones(len(r0), dtype=bool)
    Jfd = np.zeros_like(J)
    for i in range(f.n_params):
        dp = np.zeros(f.n_params)
        dp[i] = step
        plus, minus = pose.retract(dp), pose.retract(-dp)
        rp, rm = f.residuals(plus), f.residuals(minus)
        stable &= (f.signature(plus) == sig0) & (f.signature(minus) == sig0)
        Jfd[:, i] = (rp - rm) / (2 * step)
    scale = np.maximum(np.abs(Jfd).max(axis=1), np.abs(J).max(axis=1))
    rows = stable & (scale > 1e-8)
    if not rows.any():
        return 0.0, 0
    err = np.abs(J[rows] - Jfd[rows]).max(axis=1) / scale[rows]
    return float(err.max()), int(rows.sum())
