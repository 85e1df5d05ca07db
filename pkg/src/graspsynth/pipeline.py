"""Sample, refine, rank; and the rank/L_grasp evaluation harness."""

from __future__ import annotations

import json
import logging
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .contact import ContactMap
from .hand.kinematics import HandPose, forward_kinematics, pose_distance, segment_sdf_batch
from .hand.model import HandModel
from .objective import GraspObjective
from .objects import ObjectModel
from .optimizer import lm_minimize
from .sampler import Sample, contact_energy, generate_seeds, sample_seed

log = logging.getLogger(__name__)

METRICS = ("residual", "contact_energy")


class PipelineError(RuntimeError):
    pass


@dataclass
class GraspEntry:
    index: int
    pose: HandPose
    report: dict
    seed: dict
    energy: float
    init_pose: HandPose
    init_report: dict
    lm_reason: str
    lm_iterations: int
    rank: int = 0

    @property
    def cost(self) -> float:
        return self.report["total"]

    @property
    def flagged(self) -> bool:
        return self.lm_reason == "solver_error"

    def to_dict(self) -> dict:
        return {"rank": self.rank, "index": self.index, "L": self.cost, "energy": self.energy,
                "pose": self.pose.to_dict(), "report": self.report, "seed": self.seed,
                "init_pose": self.init_pose.to_dict(), "init_report": self.init_report,
                "lm": {"reason": self.lm_reason, "iterations": self.lm_iterations,
                       "flagged": self.flagged}}


@dataclass
class RankedGraspSet:
    entries: list[GraspEntry]
    metric: str = "residual"
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i) -> GraspEntry:
        return self.entries[i]

    def to_dict(self) -> dict:
        return {"metric": self.metric, "M": len(self.entries), "config": self.config,
                "entries": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _key(metric: str):
    if metric == "residual":
        return lambda e: (e.cost, e.energy, e.index)
    if metric == "contact_energy":
        return lambda e: (e.energy, e.cost, e.index)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def rank_by(metric: str, grasps: RankedGraspSet) -> RankedGraspSet:
    entries = sorted(grasps.entries, key=_key(metric))
    out = []
    for r, e in enumerate(entries, 1):
        out.append(GraspEntry(**{**e.__dict__, "rank": r}))
    return RankedGraspSet(out, metric, grasps.config)


# ---------------------------------------------------------------------------
# Worker plumbing: one context per process, results merged in index order
# ---------------------------------------------------------------------------

_CTX: dict = {}


def _init_worker(obj, hand, cmap, cfg):
    _CTX.update(obj=obj, hand=hand, cmap=cmap, cfg=cfg, objective=None)


def _objective() -> GraspObjective:
    if _CTX.get("objective") is None:
        _CTX["objective"] = GraspObjective(_CTX["hand"], _CTX["obj"], _CTX["cmap"], _CTX["cfg"].objective)
    return _CTX["objective"]


def _anneal_task(seed) -> list[Sample]:
    cfg = _CTX["cfg"]
    return sample_seed(seed, _CTX["obj"], _CTX["hand"], cfg.anneal, cfg.energy, cfg.seed)


def _refine_task(item):
    index, sample, seed_info = item
    f = _objective()
    init_report = f.report(sample.pose).to_dict()
    res = lm_minimize(f, sample.pose, _CTX["cfg"].lm)
    if any(b > a for a, b in zip(res.trace, res.trace[1:])):
        raise PipelineError(f"accepted L increased for candidate {index}")
    report = f.report(res.x).to_dict()
    return GraspEntry(index, res.x, report, seed_info, sample.energy, sample.pose, init_report,
                      res.reason, res.iterations)


def _run(fn, items, threads: int, ctx):
    if threads <= 1 or len(items) <= 1:
        _init_worker(*ctx)
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=ctx) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return max(1, os.cpu_count() or 1)


def synthesize(obj: ObjectModel, cmap: ContactMap, hand: HandModel, cfg: RunConfig,
               inject: list[HandPose] | None = None) -> RankedGraspSet:
    """Seeds, annealing (top-2 per seed), LM refinement of every sample, ranking by residual.

    ``inject`` adds extra candidate poses ahead of the sampled ones; they are
    refined and ranked like any other (seed recorded as ``"injected"``).
    """
    if cmap.n_attractive == 0:
        log.warning("synthesizing against a contact map with no attractive points")
    threads = cfg.threads or default_threads()
    ctx = (obj, hand, cmap, cfg)
    seeds = generate_seeds(obj, cfg.n_approach, cfg.seed)
    per_seed = _run(_anneal_task, seeds, threads, ctx)
    items = []
    for p in inject or []:
        items.append((len(items), Sample(p, contact_energy(p, obj, hand, cfg.energy), -1),
                      {"injected": True}))
    for seed, samples in zip(seeds, per_seed):
        for s in samples:
            items.append((len(items), s, seed.to_dict()))
    if not items:
        raise PipelineError("annealing produced no samples")
    entries = _run(_refine_task, items, threads, ctx)
    return rank_by("residual", RankedGraspSet(entries, "residual", cfg.to_dict(runtime=False)))


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

def contact_agreement(hand: HandModel, pose: HandPose, cmap: ContactMap, tol: float = 0.003,
                      tau_n: float = 0.7):
    """(fraction of attractive points within ``tol`` of the hand, count of gated repulsive
    points within ``tol``)."""
    Rw, tw = forward_kinematics(hand, pose)
    V, G = segment_sdf_batch(hand, Rw, tw, cmap.positions)
    k = np.argmin(V, axis=0)
    idx = np.arange(len(k))
    v, g = V[k, idx], G[k, idx]
    att = cmap.labels == 1
    coverage = float(np.mean(v[att] <= tol)) if att.any() else 1.0
    align = np.abs(np.einsum("ij,ij->i", g, cmap.normals))
    violations = int(np.sum(~att & (align > tau_n) & (v <= tol)))
    return coverage, violations


def make_predicate(hand: HandModel, cmap: ContactMap, planted: HandPose | None, target: dict):
    """Correct-grasp test on refined poses: a pose ball around the planted grasp, or contact agreement."""
    if planted is not None and "agreement" not in target:
        radius = float(target.get("radius", 1.0))
        return lambda e: pose_distance(e.pose, planted) <= radius
    spec = target.get("agreement", {})
    cov, tol = float(spec.get("coverage", 0.9)), float(spec.get("tol", 0.003))

    def agree(e):
        c, bad = contact_agreement(hand, e.pose, cmap, tol)
        return c >= cov and bad == 0

    return agree


@dataclass
class ScenarioResult:
    name: str
    M: int
    residual_rank: int
    contact_energy_rank: int
    found: bool
    top1_lgrasp_residual: float
    top1_lgrasp_contact_energy: float
    top1_lgrasp_contact_energy_refined: float

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["flagged"] = not self.found
        return d


@dataclass
class EvalReport:
    scenarios: list[ScenarioResult]

    @property
    def median_residual_rank(self) -> float:
        return float(statistics.median(s.residual_rank for s in self.scenarios))

    @property
    def median_contact_energy_rank(self) -> float:
        return float(statistics.median(s.contact_energy_rank for s in self.scenarios))

    def to_dict(self) -> dict:
        return {"scenarios": [s.to_dict() for s in self.scenarios],
                "median_residual_rank": self.median_residual_rank,
                "median_contact_energy_rank": self.median_contact_energy_rank}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def first_rank(grasps: RankedGraspSet, predicate) -> int:
    for e in grasps.entries:
        if predicate(e):
            return e.rank
    return len(grasps) + 1


def score_scenario(name: str, grasps: RankedGraspSet, predicate) -> ScenarioResult:
    by_res = rank_by("residual", grasps)
    by_ce = rank_by("contact_energy", grasps)
    r_res = first_rank(by_res, predicate)
    r_ce = first_rank(by_ce, predicate)
    top_ce = by_ce.entries[0]
    return ScenarioResult(name, len(grasps), r_res, r_ce, r_res <= len(grasps),
                          by_res.entries[0].report["grasp"], top_ce.init_report["grasp"],
                          top_ce.report["grasp"])


def evaluate(scenarios, hand: HandModel, cfg: RunConfig, inject_planted: bool = True) -> EvalReport:
    """Rank of the correct grasp under both metrics, per scenario, plus medians."""
    if not scenarios:
        raise ValueError("no scenarios to evaluate")
    results = []
    for sc in scenarios:
        inject = [sc.planted] if (inject_planted and sc.planted is not None) else None
        grasps = synthesize(sc.obj, sc.cmap, hand, cfg, inject)
        pred = make_predicate(hand, sc.cmap, sc.planted, sc.target)
        res = score_scenario(sc.name, grasps, pred)
        if not res.found:
            log.warning("%s: no candidate satisfies the target predicate", sc.name)
        results.append(res)
    return EvalReport(results)
