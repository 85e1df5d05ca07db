"""Grasp synthesis for articulated hands from object geometry and contact maps."""

from .config import RunConfig, load_config
from .contact import ContactMap, build_contact_map, load_contact_map, manual_contact_map, save_contact_map
from .hand import HandModel, HandPose, load_hand
from .objective import GraspObjective, ObjectiveConfig, ResidualReport
from .objects import ObjectModel, make_object
from .optimizer import LmParams, LmResult, lm_minimize
from .pipeline import EvalReport, RankedGraspSet, evaluate, rank_by, synthesize
from .sampler import AnnealParams, GraspSeed, anneal, close_fingers, contact_energy, generate_seeds

__version__ = "0.1.0"

__all__ = [
    "AnnealParams", "ContactMap", "EvalReport", "GraspObjective", "GraspSeed", "HandModel", "HandPose",
    "LmParams", "LmResult", "ObjectModel", "ObjectiveConfig", "RankedGraspSet", "ResidualReport",
    "RunConfig", "anneal", "build_contact_map", "close_fingers", "contact_energy", "evaluate",
    "generate_seeds", "lm_minimize", "load_config", "load_contact_map", "load_hand", "make_object",
    "manual_contact_map", "rank_by", "save_contact_map", "synthesize",
]
