"""Contact-agnostic grasp sampling: seeds, finger closing and simulated annealing."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .geometry.sampling import SurfacePoint, sample_surface
from .geometry.transforms import axis_rotation, frame_from_axis, rotvec_to_matrix
from .hand.kinematics import HandPose, pose_distance
from .hand.model import HandModel
from .objects import ObjectModel

ROLLS = (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)
STANDOFFS = (0.0, 0.01, 0.02, 0.03)


@dataclass(frozen=True)
class GraspSeed:
    point: SurfacePoint
    theta: float
    d: float
    index: int = 0

    def to_dict(self) -> dict:
        return {"index": self.index, "a": self.point.position.tolist(),
                "n": self.point.normal.tolist(), "face": int(self.point.face),
                "theta": self.theta, "d": self.d}


@dataclass(frozen=True)
class AnnealParams:
    iterations: int = 45000
    t0: float = 10.0
    cooling: float = 0.9997
    trans_scale: float = 0.005
    rot_scale: float = 0.05
    joint_scale: float = 0.05
    cone_deg: float = 30.0
    energy_scale: float = 1000.0    # Metropolis sees energies in mm
    distinct_radius: float = 1.0    # in pose_distance units (1 cm, 0.2 rad)
    keep: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if min(self.t0, self.trans_scale, self.rot_scale, self.joint_scale) <= 0:
            raise ValueError("temperature and proposal scales must be > 0")
        if not 0.0 < self.cooling <= 1.0:
            raise ValueError("cooling must lie in (0, 1]")
        if not 0.0 < self.cone_deg <= 180.0:
            raise ValueError("cone_deg must lie in (0, 180]")

    def scaled(self, iterations: int) -> "AnnealParams":
        """Same start and end temperature over a different iteration budget."""
        if iterations <= 0:
            return replace(self, iterations=max(iterations, 0))
        cooling = self.cooling ** (self.iterations / iterations) if self.iterations else self.cooling
        return replace(self, iterations=iterations, cooling=cooling)


@dataclass(frozen=True)
class EnergyParams:
    beta: float = 0.05
    eps: float = 0.001
    step: float = 0.05
    bisect_iters: int = 8
    cap_depth: float = 0.005
    cap_value: float = 1e3


@dataclass
class Sample:
    pose: HandPose
    energy: float
    seed_index: int = -1

    def to_dict(self) -> dict:
        return {"pose": self.pose.to_dict(), "energy": self.energy, "seed": self.seed_index}


@dataclass
class SampleSet:
    samples: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def to_json(self) -> str:
        return json.dumps([s.to_dict() for s in self.samples], indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SampleSet":
        return cls([Sample(HandPose.from_dict(s["pose"]), float(s["energy"]), int(s["seed"]))
                    for s in json.loads(text)])


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

def generate_seeds(obj: ObjectModel, n_approach: int, rng_seed: int) -> list[GraspSeed]:
    if n_approach < 1:
        raise ValueError("n_approach must be >= 1")
    pts = sample_surface(obj.mesh, n_approach, rng_seed)
    seeds = []
    for p in pts:
        for theta in ROLLS:
            for d in STANDOFFS:
                seeds.append(GraspSeed(p, theta, d, len(seeds)))
    return seeds


def approach_rotation(hand: HandModel, direction, theta: float) -> np.ndarray:
    """Palm rotation sending the hand's approach axis to ``direction``, rolled by ``theta``."""
    F = frame_from_axis(direction)
    B = frame_from_axis(hand.approach)
    return F @ axis_rotation(np.array([0.0, 0.0, 1.0]), theta) @ B.T


def seed_to_pose(seed: GraspSeed, hand: HandModel, obj: ObjectModel | None = None) -> HandPose:
    n = seed.point.normal
    R = approach_rotation(hand, -n, seed.theta)
    t = seed.point.position + (seed.d + hand.palm_offset) * n
    return HandPose.from_matrix(R, t, hand.open_posture)


# ---------------------------------------------------------------------------
# Energy and closing
# ---------------------------------------------------------------------------

_KERNELS: dict = {}


def energy_kernel(hand: HandModel, obj: ObjectModel, params: EnergyParams | None = None):
    p = params or EnergyParams()
    key = (id(hand), id(obj), p)
    k = _KERNELS.get(key)
    if k is None:
        if len(_KERNELS) > 16:
            _KERNELS.clear()
        g = obj.sdf
        k = backend.EnergyKernel(hand.kernel_arrays(), np.ascontiguousarray(g.values), g.origin, g.h,
                                 p.step, p.bisect_iters, p.eps, p.beta, p.cap_depth, p.cap_value)
        _KERNELS[key] = (k, hand, obj)
        return k
    return k[0]


def contact_energy(pose: HandPose, obj: ObjectModel, hand: HandModel,
                   params: EnergyParams | None = None) -> float:
    """Distance plus misalignment of the hand's pad sites; capped when the hand is deep inside."""
    return float(energy_kernel(hand, obj, params).energy(pose.R, pose.t, pose.d))


def close_fingers(pose: HandPose, obj: ObjectModel, hand: HandModel,
                  params: EnergyParams | None = None) -> HandPose:
    d = energy_kernel(hand, obj, params).close(pose.R, pose.t, pose.d)
    return HandPose(pose.q, pose.t, d)


# ---------------------------------------------------------------------------
# Annealing
# ---------------------------------------------------------------------------

def _free_dofs(hand: HandModel) -> np.ndarray:
    closing = {hand.joint_of[s].dof for s in hand.closing_order}
    return np.array([k for k in range(hand.n_dof) if k not in closing], dtype=np.int64)


class _Elite:
    """The k lowest-energy poses seen, pairwise farther apart than ``radius``."""

    def __init__(self, k: int, radius: float):
        self.k = k
        self.radius = radius
        self.items: list[tuple[float, int, HandPose]] = []

    def offer(self, energy: float, order: int, pose_fn) -> None:
        if len(self.items) == self.k and energy >= self.items[-1][0]:
            return
        pose = pose_fn()
        near = [i for i, (_, _, p) in enumerate(self.items)
                if pose_distance(p, pose) <= self.radius]
        if any(self.items[i][0] <= energy for i in near):
            return
        self.items = [it for i, it in enumerate(self.items) if i not in near]
        self.items.append((energy, order, pose))
        self.items.sort(key=lambda it: (it[0], it[1]))
        del self.items[self.k:]


def anneal(seed_pose: HandPose, obj: ObjectModel, hand: HandModel, params: AnnealParams,
           approach_dir=None, energy: EnergyParams | None = None,
           rng: np.random.Generator | None = None, check_cone: bool = False) -> list[tuple[HandPose, float]]:
    """Metropolis search over palm pose and non-closing DOFs; fingers close at every step.

    Proposals whose approach axis leaves the cone around ``approach_dir``
    (default: the seed's own approach axis) are rejected outright.
    """
    kernel = energy_kernel(hand, obj, energy)
    rng = rng if rng is not None else np.random.default_rng(params.seed)
    axis_local = hand.approach
    R = seed_pose.R
    cone_axis = R @ axis_local if approach_dir is None else np.asarray(approach_dir, float)
    cone_axis = cone_axis / np.linalg.norm(cone_axis)
    cos_cone = math.cos(math.radians(params.cone_deg))
    free = _free_dofs(hand)
    lo, hi = hand.lower[free], hand.upper[free]
    d_open = hand.open_posture.copy()

    def full_d(df):
        d = d_open.copy()
        d[free] = df
        return d

    t = seed_pose.t.copy()
    df = np.clip(seed_pose.d[free], lo, hi)
    d_closed, e = kernel.close_and_energy(R, t, full_d(df))
    elite = _Elite(params.keep, params.distinct_radius)
    elite.offer(e, 0, lambda: HandPose.from_matrix(R, t, d_closed))

    n = params.iterations
    if n:
        steps = rng.normal(size=(n, 6 + len(free)))
        coins = rng.random(n)
    temp = params.t0
    scale = params.energy_scale
    for it in range(n):
        temp *= params.cooling
        s = steps[it]
        R2 = rotvec_to_matrix(s[3:6] * params.rot_scale) @ R
        if float(cone_axis @ (R2 @ axis_local)) < cos_cone:
            continue
        t2 = t + s[:3] * params.trans_scale
        df2 = np.clip(df + s[6:] * params.joint_scale, lo, hi)
        d2, e2 = kernel.close_and_energy(R2, t2, full_d(df2))
        if check_cone:
            assert float(cone_axis @ (R2 @ axis_local)) >= cos_cone - 1e-12
        elite.offer(e2, it + 1, lambda: HandPose.from_matrix(R2, t2, d2))
        de = (e2 - e) * scale
        if de <= 0.0 or (temp > 0.0 and coins[it] < math.exp(-de / temp)):
            R, t, df, e = R2, t2, df2, e2
    return [(p, en) for en, _, p in elite.items]


def seed_rng(global_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(global_seed), int(index)]))


def sample_seed(seed: GraspSeed, obj: ObjectModel, hand: HandModel, params: AnnealParams,
                energy: EnergyParams | None = None, global_seed: int | None = None) -> list[Sample]:
    """Anneal one seed with its own rng stream derived from (global seed, seed index)."""
    pose = seed_to_pose(seed, hand, obj)
    rng = seed_rng(params.seed if global_seed is None else global_seed, seed.index)
    out = anneal(pose, obj, hand, params, -seed.point.normal, energy, rng)
    return [Sample(p, float(e), seed.index) for p, e in out]
