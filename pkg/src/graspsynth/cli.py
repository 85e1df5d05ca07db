"""``graspsynth`` command line: contactmap, synthesize, eval, export.

Exit codes: 0 success, 2 input error, 3 synthesis failure, 4 evaluation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from dataclasses import replace

import yaml

from .config import ConfigError, RunConfig, load_config, parse_value
from .contact import (ContactMapError, ScalarContactField, build_contact_map, load_contact_map,
                      manual_contact_map, region_predicate, save_contact_map)
from .export import export_grasp
from .geometry.mesh import MeshError, load_mesh, load_mesh_with_properties
from .geometry.sampling import sample_surface
from .hand.kinematics import HandPose
from .hand.model import HandConfigError, load_hand
from .objects import make_object
from .pipeline import evaluate, synthesize
from .scenarios import DATA_DIR, ScenarioError, build_scenario, load_manifest

EXIT_OK, EXIT_INPUT, EXIT_SYNTH, EXIT_EVAL = 0, 2, 3, 4

log = logging.getLogger("graspsynth")


class InputError(Exception):
    pass


def _parse_set(items) -> dict:
    """``section.key=value`` pairs into a nested dict; values are parsed as YAML scalars."""
    out: dict = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise InputError(f"--set expects key=value, got {item!r}")
        value = parse_value(raw)
        if "." in key:
            section, name = key.split(".", 1)
            out.setdefault(section, {})[name] = value
        else:
            out[key] = value
    return out


def _resolve_config(args) -> RunConfig:
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
        flat = {"seed": args.seed, "threads": args.threads, "tau_t": getattr(args, "tau_t", None),
                "n_points": getattr(args, "n_points", None), "n_approach": getattr(args, "n_approach", None),
                "hand": getattr(args, "hand", None), "object": getattr(args, "object", None),
                "contact": getattr(args, "contact", None)}
        over = {k: v for k, v in flat.items() if v is not None}
        if getattr(args, "anneal_iters", None) is not None:
            # keep the start/end temperatures of the configured schedule
            cfg = replace(cfg, anneal=cfg.anneal.scaled(args.anneal_iters))
        if getattr(args, "lm_iters", None) is not None:
            over["lm"] = {"max_iters": args.lm_iters}
        cfg = cfg.merged(over)
        return cfg.merged(_parse_set(getattr(args, "set", None)))
    except (ConfigError, ValueError) as exc:
        raise InputError(str(exc)) from exc


def _load_hand(name):
    try:
        return load_hand(name)
    except (HandConfigError, OSError) as exc:
        raise InputError(f"hand: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_contactmap(args) -> int:
    cfg = _resolve_config(args)
    try:
        if args.field:
            mesh, props = load_mesh_with_properties(args.field)
            if args.property not in props:
                raise InputError(f"{args.field} has no vertex property {args.property!r}; "
                                 f"found {sorted(props)}")
            samples = sample_surface(mesh, cfg.n_points, cfg.seed)
            cmap = build_contact_map(ScalarContactField(mesh, props[args.property]), samples,
                                     cfg.tau_t, source=os.path.basename(args.field))
        elif args.object and args.regions:
            mesh = load_mesh(args.object)
            with open(args.regions) as fh:
                specs = yaml.safe_load(fh) or []
            if isinstance(specs, dict):
                specs = specs.get("regions", [])
            regions = [(region_predicate(s), int(s.get("label", 1))) for s in specs]
            samples = sample_surface(mesh, cfg.n_points, cfg.seed)
            cmap = manual_contact_map(mesh, samples, regions, source=os.path.basename(args.regions))
        else:
            raise InputError("give --field PLY, or --object MESH with --regions FILE")
        save_contact_map(cmap, args.output)
    except (MeshError, ContactMapError, OSError, yaml.YAMLError, KeyError, TypeError) as exc:
        raise InputError(str(exc)) from exc
    summary = cmap.summary()
    summary["attractive_fraction"] = cmap.n_attractive / len(cmap)
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.object or not cfg.contact:
        raise InputError("synthesize needs --object and --contact (or both in --config)")
    if not args.output:
        raise InputError("synthesize needs --output DIR")
    hand = _load_hand(cfg.hand)
    try:
        mesh = load_mesh(cfg.object)
        cmap = load_contact_map(cfg.contact)
    except (MeshError, ContactMapError, OSError) as exc:
        raise InputError(str(exc)) from exc
    out = args.output
    existed = os.path.isdir(out)
    os.makedirs(out, exist_ok=True)
    written = []
    try:
        obj = make_object(mesh, cfg.object_h, name=os.path.basename(cfg.object))
        grasps = synthesize(obj, cmap, hand, cfg)
        path = os.path.join(out, "ranked.json")
        with open(path, "w") as fh:
            fh.write(grasps.to_json() + "\n")
        written.append(path)
        path = os.path.join(out, "config.json")
        with open(path, "w") as fh:
            fh.write(cfg.to_json() + "\n")
        written.append(path)
        for e in grasps.entries[:args.top_k]:
            path = os.path.join(out, f"grasp_{e.rank:03d}.obj")
            export_grasp(path, hand, e.pose, mesh)
            written.append(path)
    except Exception:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        if not existed:
            shutil.rmtree(out, ignore_errors=True)
        raise
    best = grasps.entries[0]
    print(json.dumps({"M": len(grasps), "best_L": best.cost, "output": out}, indent=2))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    hand = _load_hand(cfg.hand)
    manifest = args.manifest or os.path.join(DATA_DIR, "scenarios.yaml")
    try:
        specs = load_manifest(manifest)
    except ScenarioError as exc:
        raise InputError(str(exc)) from exc
    base_dir = os.path.dirname(os.path.abspath(manifest))
    scenarios, failed = [], []
    for spec in specs:
        try:
            scenarios.append(build_scenario(spec, hand, cfg.n_points, cfg.seed, cfg.object_h,
                                            cfg.tau_t, base_dir))
        except (ScenarioError, MeshError, ContactMapError, OSError) as exc:
            failed.append({"scenario": spec.get("name", "?"), "error": str(exc)})
    if failed:
        print(json.dumps({"failed": failed}, indent=2), file=sys.stderr)
        return EXIT_EVAL
    try:
        report = evaluate(scenarios, hand, cfg, inject_planted=not args.no_inject)
    except Exception as exc:  # noqa: BLE001 - report which stage failed
        print(json.dumps({"failed": [{"scenario": "*", "error": str(exc)}]}), file=sys.stderr)
        return EXIT_EVAL
    text = report.to_json()
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_export(args) -> int:
    hand_name = args.hand
    try:
        with open(args.ranked) as fh:
            data = json.load(fh)
        if hand_name is None:
            hand_name = data.get("config", {}).get("hand", "barrett-like")
        hand = _load_hand(hand_name)
        mesh = load_mesh(args.object) if args.object else None
        entries = data["entries"][:args.top_k]
        poses = [(e["rank"], HandPose.from_dict(e["pose"])) for e in entries]
    except (OSError, KeyError, ValueError, MeshError) as exc:
        raise InputError(str(exc)) from exc
    os.makedirs(args.output, exist_ok=True)
    for rank, pose in poses:
        export_grasp(os.path.join(args.output, f"grasp_{rank:03d}.obj"), hand, pose, mesh)
    print(json.dumps({"exported": len(poses), "output": args.output}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="YAML/JSON run config; flags override it")
    p.add_argument("--seed", type=int, help="global rng seed")
    p.add_argument("--threads", type=int, help="worker processes (default: available CPUs)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config field, e.g. objective.lambda_a=150")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graspsynth", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("contactmap", help="build a .contactmap from a scalar field or regions")
    _common(p)
    p.add_argument("--field", help="PLY mesh with a per-vertex contact scalar")
    p.add_argument("--property", default="quality", help="vertex property holding the scalar")
    p.add_argument("--object", help="object mesh (with --regions)")
    p.add_argument("--regions", help="YAML list of region predicates with labels")
    p.add_argument("--tau-t", type=float, dest="tau_t")
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_contactmap)

    p = sub.add_parser("synthesize", help="sample, refine and rank grasps")
    _common(p)
    p.add_argument("--object")
    p.add_argument("--contact")
    p.add_argument("--hand", help="shipped hand name or .handcfg path")
    p.add_argument("--n-approach", type=int, dest="n_approach")
    p.add_argument("--anneal-iters", type=int, dest="anneal_iters")
    p.add_argument("--lm-iters", type=int, dest="lm_iters")
    p.add_argument("--top-k", type=int, default=0, dest="top_k", help="export the top k grasps as OBJ")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("eval", help="rank evaluation over a scenario manifest")
    _common(p)
    p.add_argument("--manifest", help="scenario manifest (default: the shipped one)")
    p.add_argument("--hand")
    p.add_argument("--n-approach", type=int, dest="n_approach")
    p.add_argument("--n-points", type=int, dest="n_points")
    p.add_argument("--anneal-iters", type=int, dest="anneal_iters")
    p.add_argument("--lm-iters", type=int, dest="lm_iters")
    p.add_argument("--no-inject", action="store_true", help="do not add planted grasps to the candidates")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="write posed hands from a ranked.json as OBJ")
    p.add_argument("--ranked", required=True)
    p.add_argument("--hand")
    p.add_argument("--object", help="object mesh to include in each file")
    p.add_argument("--top-k", type=int, default=5, dest="top_k")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    failure = {"synthesize": EXIT_SYNTH, "eval": EXIT_EVAL}.get(args.command, EXIT_INPUT)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - mapped to the documented exit codes
        log.debug("failure", exc_info=True)
        print(f"error: {args.command} failed: {exc}", file=sys.stderr)
        return failure


if __name__ == "__main__":
    sys.exit(main())
