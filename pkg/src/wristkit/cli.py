"""Command-line entry point: ``wristkit <subcommand> ...``.

Exit codes: 0 success, 1 domain error (one JSON line on stderr), 2 usage
error. Every report is JSON carrying ``schema_version``.
"""
from __future__ import annotations

import argparse
import json
import math
import os
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .errors import NotConverged, WristkitError

SCHEMA_VERSION = "1.0"


def _dump(report: dict) -> str:
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _emit(report: dict, out: str | None) -> None:
    text = _dump(report)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _header(command: str) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, "tool_version": __version__}


def _floats(text: str, n: int | None = None) -> list[float]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
    return vals


def _existing_file(text: str) -> str:
    if not Path(text).is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    return text


def _robot_ref(text: str) -> str:
    from .kinematics import BUNDLED_ROBOTS

    if text in BUNDLED_ROBOTS or Path(text).is_file():
        return text
    raise argparse.ArgumentTypeError(f"not a robot file or bundled robot name: {text}")


def _scene_ref(text: str) -> str:
    from .workspace import BUNDLED_SCENES

    if text in BUNDLED_SCENES or Path(text).is_file():
        return text
    raise argparse.ArgumentTypeError(f"not a scene file or bundled scene name: {text}")


def _grid(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    try:
        counts = tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 20x20x20, got {text!r}")
    if len(counts) == 1:
        counts = counts * 3
    if len(counts) != 3 or min(counts) < 2:
        raise argparse.ArgumentTypeError("grid needs three counts, each at least 2")
    return counts


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


# --- subcommands -----------------------------------------------------------------------


def cmd_fk(args) -> dict:
    from .geom import pose_to_json
    from .kinematics import forward_kinematics, load_robot

    model = load_robot(args.robot)
    q = np.radians(args.q) if args.degrees else np.asarray(args.q)
    res = forward_kinematics(model, q)
    return {
        **_header("fk"),
        "robot": model.name,
        "q_rad": [float(v) for v in q],
        "ee_pose": pose_to_json(res.ee),
        "link_poses": [{"name": n, "pose": pose_to_json(p)} for n, p in zip(model.link_names, res.link_poses)],
    }


def _target_pose(args):
    from .geom import Pose, pose_from_json, quat_to_rotation, rotation_from_rpy

    if args.target:
        with open(args.target) as fh:
            return pose_from_json(json.load(fh))
    if args.quat is not None:
        rot = quat_to_rotation(args.quat)
    elif args.rpy_deg is not None:
        rot = rotation_from_rpy(args.rpy_deg, degrees=True)
    else:
        rot = np.eye(3)
    return Pose(rot, args.xyz)


def cmd_ik(args) -> dict:
    from .diffik import DiffIKConfig, solve_pose_ik
    from .geom import pose_to_json
    from .kinematics import load_robot

    model = load_robot(args.robot)
    target = _target_pose(args)
    cfg = DiffIKConfig.for_pose_ik(max_iterations=args.max_iter, tol_position=args.tol_position,
                                   tol_orientation=args.tol_orientation)
    if args.position_only:
        cfg = cfg.position_only()
    if args.seed_q is not None:
        seed = np.radians(args.seed_q) if args.degrees else np.asarray(args.seed_q)
    else:
        seed = model.home if model.home is not None else np.zeros(model.dof)
    res = solve_pose_ik(model, seed, target, cfg, restarts=args.restarts)
    return {**_header("ik"), "robot": model.name, "target": pose_to_json(target),
            "position_only": cfg.is_position_only, "result": res.to_json()}


def _ik_config_json(cfg) -> dict:
    return {"dt": cfg.dt, "damping": cfg.damping, "weights": list(cfg.weights), "eta": cfg.eta,
            "max_iterations": cfg.max_iterations, "tol_position": cfg.tol_position,
            "tol_orientation": cfg.tol_orientation}


def cmd_workspace(args) -> dict:
    from .kinematics import load_robot
    from .workspace import GridSpec, default_reach_config, heatmap_ppm, load_scene, reachability_grid

    model = load_robot(args.robot)
    scene = load_scene(args.scene)
    grid = GridSpec.over(scene, args.grid)
    cfg = default_reach_config()
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    res = reachability_grid(model, scene, grid, cfg, seed=args.seed, workers=threads)
    if args.heatmap:
        Path(args.heatmap).write_bytes(heatmap_ppm(res))
    return {**_header("workspace"), "seed": args.seed, "ik": _ik_config_json(cfg), **res.to_json()}


def cmd_compare(args) -> dict:
    from .workspace import ReachabilityResult, compare_workspaces

    results = []
    for path in (args.report_a, args.report_b):
        with open(path) as fh:
            results.append(ReachabilityResult.from_json(json.load(fh)))
    cmp = compare_workspaces(*results)
    body = cmp.to_json()
    if math.isinf(body["improvement_pct"]):
        body["improvement_pct"] = None
    return {**_header("compare"), "scene": results[0].scene, "grid": results[0].grid.to_json(), **body}


def cmd_actuator_check(args) -> dict:
    from .actuator import actuator_report, load_actuator

    return {**_header("actuator-check"), **actuator_report(load_actuator(args.spec))}


def cmd_reqs(args) -> dict:
    from .actuator import bundled_requirements_path, evaluate_requirements, load_requirements_csv

    path = args.csv or bundled_requirements_path()
    report = evaluate_requirements(load_requirements_csv(path))
    return {**_header("reqs"), "source": Path(path).name, **report.to_json()}


def cmd_demolog_stats(args) -> dict:
    from .demolog import (bundled_fixture_path, dataset_report, groups_csv, load_completion_times,
                          load_dataset, speedup_report)

    path = args.log or bundled_fixture_path()
    report = dataset_report(load_dataset(path))
    out = {**_header("demolog-stats"), "source": Path(path).name, **report}
    if args.speedups is not None:
        stats = load_completion_times(None if args.speedups == "bundled" else args.speedups)
        rows = []
        for (robot, wrist), ours in stats.items():
            if wrist == "serial" or (robot, "serial") not in stats:
                continue
            rows.append({"robot": robot, **speedup_report(stats[(robot, "serial")], ours).to_json()})
        out["speedups"] = rows
    if args.csv:
        Path(args.csv).write_text(groups_csv(report))
    return out


# --- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wristkit", description="Wrist kinematics, workspace and actuator tools.")
    p.add_argument("--version", action="version", version=f"wristkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("fk", help="forward kinematics of a joint configuration")
    s.add_argument("--robot", required=True, type=_robot_ref)
    s.add_argument("--q", required=True, type=_floats, help="comma-separated joint angles (rad)")
    s.add_argument("--degrees", action="store_true", help="interpret --q in degrees")
    s.add_argument("--out")
    s.set_defaults(func=cmd_fk)

    s = sub.add_parser("ik", help="iterative pose inverse kinematics")
    s.add_argument("--robot", required=True, type=_robot_ref)
    tgt = s.add_mutually_exclusive_group(required=True)
    tgt.add_argument("--target", type=_existing_file, help="pose JSON (translation + quaternion_wxyz or rpy_deg)")
    tgt.add_argument("--xyz", type=lambda t: _floats(t, 3))
    rot = s.add_mutually_exclusive_group()
    rot.add_argument("--quat", type=lambda t: _floats(t, 4), help="w,x,y,z")
    rot.add_argument("--rpy-deg", type=lambda t: _floats(t, 3))
    s.add_argument("--seed-q", type=_floats)
    s.add_argument("--degrees", action="store_true", help="interpret --seed-q in degrees")
    s.add_argument("--position-only", action="store_true")
    s.add_argument("--max-iter", type=_positive_int, default=200)
    s.add_argument("--restarts", type=int, default=15, help="extra seeds tried after a failed solve (default 15)")
    s.add_argument("--tol-position", type=float, default=1e-5)
    s.add_argument("--tol-orientation", type=float, default=1e-4)
    s.add_argument("--out")
    s.set_defaults(func=cmd_ik)

    s = sub.add_parser("workspace", help="reachability grid of one robot in a scene")
    s.add_argument("--robot", required=True, type=_robot_ref)
    s.add_argument("--scene", default="cabinet", type=_scene_ref)
    s.add_argument("--grid", default=(20, 20, 20), type=_grid, help="NxNxN (default 20x20x20)")
    s.add_argument("--seed", default=0, type=int, help="IK seed dither (default 0)")
    s.add_argument("--threads", type=_positive_int, help="worker processes (default: CPU count)")
    s.add_argument("--heatmap", help="write a per-z-slice PPM image here")
    s.add_argument("--out")
    s.set_defaults(func=cmd_workspace)

    s = sub.add_parser("compare", help="relative reachability of two workspace reports")
    s.add_argument("report_a", type=_existing_file, help="baseline report")
    s.add_argument("report_b", type=_existing_file, help="candidate report")
    s.add_argument("--out")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("actuator-check", help="torque, inertia, gear stress, backdrive and step-response checks")
    s.add_argument("--spec", type=_existing_file, help="actuator JSON (default: bundled)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_actuator_check)

    s = sub.add_parser("reqs", help="evaluate a requirements CSV")
    s.add_argument("--csv", type=_existing_file, help="requirements CSV (default: bundled table)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_reqs)

    s = sub.add_parser("demolog-stats", help="episode metrics and operator statistics")
    s.add_argument("--log", type=_existing_file, help="episode CSV (default: bundled fixture)")
    s.add_argument("--speedups", nargs="?", const="bundled",
                   help="add completion-time speedups (optional JSON path; default bundled)")
    s.add_argument("--csv", help="also write per-group stats as CSV")
    s.add_argument("--out")
    s.set_defaults(func=cmd_demolog_stats)
    return p


def _error_line(exc: BaseException) -> str:
    body = {"schema_version": SCHEMA_VERSION, "error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NotConverged) and exc.result is not None:
        body["position_residual_m"] = exc.result.position_residual
        body["orientation_residual_rad"] = exc.result.orientation_residual
    return json.dumps(body, allow_nan=False)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        report = args.func(args)
        _emit(report, args.out)
    except (WristkitError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(_error_line(exc) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
