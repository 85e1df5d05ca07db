"""Grasp objective as a least-squares residual vector.

Blocks, in order:

* attractive contact points   sqrt(la) * SDF_k(p)
* repulsive contact points    sqrt(lr) * max(0, dr - SDF_k(p)), only when the
                              nearest segment sits above the point, i.e.
                              |unit grad SDF_k(p) . n| > tau_n
* thumb                       sqrt(lt) * SDF_object(thumb point)
* hand-object penetration     sqrt(li) * max(0, -SDF_object(x)) at check points
* self penetration            sqrt(li) * max(0, -SDF_k(x)) for check points of
                              segment j against non-adjacent segments k

L is the plain sum of squared residuals.  The closest segment k, the gate and
the hinge/penetration activity are the *activation*; the Jacobian holds it
fixed (semi-smooth Gauss-Newton).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .contact import ContactMap
from .hand.kinematics import HandPose, forward_kinematics, joint_frames, segment_sdf_batch
from .hand.model import HandModel
from .objects import ObjectModel


@dataclass(frozen=True)
class ObjectiveConfig:
    lambda_a: float = 150.0
    lambda_r: float = 20.0
    lambda_t: float = 25.0
    lambda_i: float = 100.0
    tau_n: float = 0.7
    delta_r: float = 0.01
    n_int: int = 50

    def __post_init__(self):
        for name in ("lambda_a", "lambda_r", "lambda_t", "lambda_i"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.tau_n < 1.0:
            raise ValueError("tau_n must lie in (0, 1)")
        if self.delta_r <= 0:
            raise ValueError("delta_r must be > 0")
        if self.n_int < 1:
            raise ValueError("n_int must be >= 1")


@dataclass
class ResidualReport:
    attractive: float
    repulsive: float
    thumb: float
    intersection_object: float
    intersection_self: float
    total: float
    gated: np.ndarray = field(repr=False)
    hinge_active: np.ndarray = field(repr=False)

    @property
    def grasp(self) -> float:
        return self.attractive + self.repulsive

    @property
    def intersection(self) -> float:
        return self.intersection_object + self.intersection_self

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("gated")
        d.pop("hinge_active")
        d["grasp"] = self.grasp
        d["intersection"] = self.intersection
        d["n_gated"] = int(self.gated.sum())
        d["n_repulsive_active"] = int((self.gated & self.hinge_active).sum())
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class Activation:
    k: np.ndarray          # closest segment per contact point
    gate: np.ndarray       # Eq. 4 gate, repulsive points
    hinge: np.ndarray      # dr - SDF > 0, repulsive points
    obj_pen: np.ndarray    # hand-object check points inside the object
    self_pen: np.ndarray   # self check rows inside the other segment


class _Eval:
    """Everything computed at one pose, shared by residuals and the Jacobian."""


class GraspObjective:
    def __init__(self, hand: HandModel, obj: ObjectModel, cmap: ContactMap,
                 cfg: ObjectiveConfig | None = None):
        self.hand = hand
        self.obj = obj
        self.cmap = cmap
        self.cfg = cfg or ObjectiveConfig()
        att = cmap.labels == 1
        self.p_att = cmap.positions[att]
        self.p_rep = cmap.positions[~att]
        self.n_rep = cmap.normals[~att]
        n_int = self.cfg.n_int
        self.cp_seg = np.concatenate([np.full(min(n_int, len(s.check_points)), i)
                                      for i, s in enumerate(hand.segments)])
        self.cp_local = np.vstack([s.check_points[:n_int] for s in hand.segments])
        # self-intersection rows: every check point of j against every listed k
        rows_j, rows_k, rows_cp = [], [], []
        for j, k in hand.self_pairs:
            idx = np.nonzero(self.cp_seg == j)[0]
            rows_j.append(np.full(len(idx), j))
            rows_k.append(np.full(len(idx), k))
            rows_cp.append(idx)
        self.self_j = np.concatenate(rows_j) if rows_j else np.zeros(0, dtype=np.int64)
        self.self_k = np.concatenate(rows_k) if rows_k else np.zeros(0, dtype=np.int64)
        self.self_cp = np.concatenate(rows_cp) if rows_cp else np.zeros(0, dtype=np.int64)
        self.n_params = 6 + hand.n_dof
        self._last = None
        self.sizes = (len(self.p_att), len(self.p_rep), 1, len(self.cp_local), len(self.self_cp))

    @property
    def n_residuals(self) -> int:
        return int(sum(self.sizes))

    # -- evaluation -----------------------------------------------------------

    def _evaluate(self, pose: HandPose, act: Activation | None = None) -> _Eval:
        # LM evaluates a trial pose and then linearizes the same pose once accepted
        if act is None and self._last is not None and self._last[0] is pose:
            return self._last[1]
        e = self._evaluate_uncached(pose, act)
        if act is None:
            self._last = (pose, e)
        return e

    def _evaluate_uncached(self, pose: HandPose, act: Activation | None) -> _Eval:
        hand, cfg = self.hand, self.cfg
        e = _Eval()
        e.pose = pose
        e.Rw, e.tw = forward_kinematics(hand, pose)
        e.axes, e.origins = joint_frames(hand, e.Rw, e.tw)

        # contact points against every segment
        pts = self.cmap.positions
        V, G, P = segment_sdf_batch(hand, e.Rw, e.tw, pts, pieces=True)
        att = self.cmap.labels == 1
        k = np.argmin(V, axis=0) if act is None else act.k
        idx = np.arange(len(pts))
        v = V[k, idx]
        g = G[k, idx]
        e.k_all = k
        e.piece = P[k, idx]
        e.v_att, e.g_att, e.k_att = v[att], g[att], k[att]
        e.v_rep, e.g_rep, e.k_rep = v[~att], g[~att], k[~att]
        gn = np.linalg.norm(e.g_rep, axis=1)
        align = np.abs(np.einsum("ij,ij->i", e.g_rep, self.n_rep)) / np.where(gn > 0, gn, 1.0)
        if act is None:
            e.gate = align > cfg.tau_n
            e.hinge = cfg.delta_r - e.v_rep > 0
        else:
            e.gate, e.hinge = act.gate, act.hinge

        # thumb
        ts = hand.thumb_segment
        e.x_thumb = e.Rw[ts] @ hand.thumb_point + e.tw[ts]
        tv, tg, tout, tcell = self.obj.query_full(e.x_thumb.reshape(1, 3))
        e.v_thumb, e.g_thumb, e.cell_thumb = float(tv[0]), tg[0], int(tcell[0]) * 2 + int(tout[0])

        # check points against the object
        e.x_cp = np.einsum("nij,nj->ni", e.Rw[self.cp_seg], self.cp_local) + e.tw[self.cp_seg]
        ov, og, oout, ocell = self.obj.query_full(e.x_cp)
        e.v_obj, e.g_obj, e.cell_obj = ov, og, ocell * 2 + oout
        e.obj_pen = ov < 0 if act is None else act.obj_pen

        # check points against other segments
        if len(self.self_cp):
            xs = e.x_cp[self.self_cp]
            sv = np.empty(len(xs))
            sg = np.empty((len(xs), 3))
            sp = np.empty(len(xs), dtype=np.int64)
            for kk in np.unique(self.self_k):
                m = self.self_k == kk
                vv, gg, pp = segment_sdf_batch(self.hand, e.Rw, e.tw, xs[m], [kk], pieces=True)
                sv[m], sg[m], sp[m] = vv[0], gg[0], pp[0]
            e.v_self, e.g_self, e.piece_self = sv, sg, sp
        else:
            e.v_self = np.zeros(0)
            e.g_self = np.zeros((0, 3))
            e.piece_self = np.zeros(0, dtype=np.int64)
        e.self_pen = e.v_self < 0 if act is None else act.self_pen
        return e

    def _residuals(self, e: _Eval) -> np.ndarray:
        cfg = self.cfg
        r_att = np.sqrt(cfg.lambda_a) * e.v_att
        r_rep = np.sqrt(cfg.lambda_r) * np.where(e.gate & e.hinge, cfg.delta_r - e.v_rep, 0.0)
        r_thumb = np.array([np.sqrt(cfg.lambda_t) * e.v_thumb])
        r_obj = np.sqrt(cfg.lambda_i) * np.where(e.obj_pen, -e.v_obj, 0.0)
        r_self = np.sqrt(cfg.lambda_i) * np.where(e.self_pen, -e.v_self, 0.0)
        return np.concatenate([r_att, r_rep, r_thumb, r_obj, r_self])

    def activation(self, pose: HandPose) -> Activation:
        e = self._evaluate(pose)
        return Activation(e.k_all, e.gate, e.hinge, e.obj_pen, e.self_pen)

    def residuals(self, pose: HandPose, act: Activation | None = None) -> np.ndarray:
        return self._residuals(self._evaluate(pose, act))

    def cost(self, pose: HandPose) -> float:
        r = self.residuals(pose)
        return float(r @ r)

    def report(self, pose: HandPose) -> ResidualReport:
        e = self._evaluate(pose)
        r = self._residuals(e)
        a, b, c, d, _ = np.cumsum(self.sizes)
        sq = r * r
        parts = [sq[:a].sum(), sq[a:b].sum(), sq[b:c].sum(), sq[c:d].sum(), sq[d:].sum()]
        return ResidualReport(*[float(x) for x in parts], total=float(sq.sum()),
                              gated=e.gate.copy(), hinge_active=e.hinge.copy())

    def signature(self, pose: HandPose) -> np.ndarray:
        """Per-row integer fingerprint of the activation and interpolation piece.

        Rows whose fingerprint is unchanged between two poses are smooth between them.
        """
        e = self._evaluate(pose)
        att = self.cmap.labels == 1
        big = 1 << 20
        s_att = e.k_att * big + e.piece[att] % big
        s_rep = ((e.k_rep * 2 + e.gate) * 2 + e.hinge) * big + e.piece[~att] % big
        s_thumb = np.array([e.cell_thumb])
        s_obj = e.obj_pen * (1 << 40) + e.cell_obj
        s_self = e.self_pen * big + e.piece_self % big
        return np.concatenate([s_att, s_rep, s_thumb, s_obj, s_self]).astype(np.int64)

    # -- Jacobian ---------------------------------------------------------------

    def _sdf_rows(self, x, g, seg, e: _Eval) -> np.ndarray:
        """d SDF_seg(x) / d params for fixed world points x near moving segments."""
        J = np.zeros((len(x), self.n_params))
        J[:, 0:3] = -g
        J[:, 3:6] = -np.cross(x - e.pose.t, g)
        if self.hand.n_dof:
            lever = x[:, None, :] - e.origins[None, :, :]
            jd = np.einsum("dj,ndj->nd", e.axes, np.cross(lever, g[:, None, :]))
            J[:, 6:] = -jd * self.hand.moves[seg]
        return J

    def _point_rows(self, x, g, seg, e: _Eval) -> np.ndarray:
        """d SDF_object(x) / d params for points x attached to segments ``seg``."""
        J = np.zeros((len(x), self.n_params))
        J[:, 0:3] = g
        J[:, 3:6] = np.cross(x - e.pose.t, g)
        if self.hand.n_dof:
            lever = x[:, None, :] - e.origins[None, :, :]
            jd = np.einsum("dj,ndj->nd", e.axes, np.cross(lever, g[:, None, :]))
            J[:, 6:] = jd * self.hand.moves[seg]
        return J

    def _jacobian(self, e: _Eval) -> np.ndarray:
        cfg = self.cfg
        blocks = [np.sqrt(cfg.lambda_a) * self._sdf_rows(self.p_att, e.g_att, e.k_att, e)]
        rep = -np.sqrt(cfg.lambda_r) * self._sdf_rows(self.p_rep, e.g_rep, e.k_rep, e)
        rep[~(e.gate & e.hinge)] = 0.0
        blocks.append(rep)
        ts = np.array([self.hand.thumb_segment])
        blocks.append(np.sqrt(cfg.lambda_t) * self._point_rows(e.x_thumb.reshape(1, 3),
                                                               e.g_thumb.reshape(1, 3), ts, e))
        obj = -np.sqrt(cfg.lambda_i) * self._point_rows(e.x_cp, e.g_obj, self.cp_seg, e)
        obj[~e.obj_pen] = 0.0
        blocks.append(obj)
        if len(self.self_cp):
            x = e.x_cp[self.self_cp]
            Js = np.zeros((len(x), self.n_params))
            if self.hand.n_dof:
                lever = x[:, None, :] - e.origins[None, :, :]
                jd = np.einsum("dj,ndj->nd", e.axes, np.cross(lever, e.g_self[:, None, :]))
                rel = self.hand.moves[self.self_j].astype(float) - self.hand.moves[self.self_k]
                Js[:, 6:] = -np.sqrt(cfg.lambda_i) * jd * rel
            Js[~e.self_pen] = 0.0
            blocks.append(Js)
        else:
            blocks.append(np.zeros((0, self.n_params)))
        return np.vstack(blocks)

    def jacobian(self, pose: HandPose) -> np.ndarray:
        return self._jacobian(self._evaluate(pose))

    def linearize(self, pose: HandPose):
        """Residuals and Jacobian at ``pose`` with the activation taken there."""
        e = self._evaluate(pose)
        return self._residuals(e), self._jacobian(e)

    def retract(self, pose: HandPose, delta) -> HandPose:
        return pose.retract(delta, self.hand)


# functional entry points -----------------------------------------------------

def grasp_term(pose, cmap, hand, obj, cfg=None):
    f = GraspObjective(hand, obj, cmap, cfg)
    r = f.residuals(pose)
    n = f.sizes[0] + f.sizes[1]
    return r[:n], f.report(pose)


def thumb_term(pose, obj, hand, cfg=None):
    cfg = cfg or ObjectiveConfig()
    from .hand.kinematics import thumb_point_world

    v, _ = obj.query(thumb_point_world(hand, pose).reshape(1, 3))
    return float(np.sqrt(cfg.lambda_t) * v[0])


def total_objective(pose, cmap, obj, hand, cfg=None):
    f = GraspObjective(hand, obj, cmap, cfg)
    rep = f.report(pose)
    return rep.total, rep
