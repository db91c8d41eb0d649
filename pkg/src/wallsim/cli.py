"""Command-line front end: run, validate and slots."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import ConfigError, SimConfig, run
from .scenario import Scenario, ScenarioError, competition_layout_notes, default_scenario, load_scenario
from .world import wall_slots

FAULT_KEYS = {"pick": "p_pick_fail", "place": "p_place_fail", "conn": "p_conn_loss"}


def parse_faults(spec: str) -> dict[str, float]:
    """``pick=0.3,place=0.1,conn=0.5`` -> SimConfig keyword arguments."""
    out = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        key, sep, value = part.partition("=")
        if not sep or key.strip() not in FAULT_KEYS:
            raise ConfigError(f"bad fault entry {part!r}; expected one of {', '.join(k + '=P' for k in FAULT_KEYS)}")
        try:
            out[FAULT_KEYS[key.strip()]] = float(value)
        except ValueError:
            raise ConfigError(f"fault probability for {key.strip()!r} is not a number: {value!r}") from None
    return out


def _scenario(path: str) -> Scenario:
    if path == "default":
        return default_scenario()
    return load_scenario(path)


def cmd_run(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario)
    kwargs = {"seed": args.seed, "dt": args.dt, "max_sim_time": args.max_time}
    if args.faults:
        kwargs.update(parse_faults(args.faults))
    config = SimConfig(**kwargs)
    metrics, _ = run(config, scenario, out_dir=args.out)
    summary = {
        "complete": metrics.complete,
        "total_points": metrics.total_points,
        "makespan_s": metrics.makespan_s,
        "slots": f"{metrics.slots_filled}/{metrics.slots_total}",
        "faults": {k: v for k, v in metrics.fault_counts.items() if v},
        "collision_violations": metrics.collision_violations,
    }
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        print(f"logs written to {args.out}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario)
    n_slots = sum(c.spec.brick_count for c in scenario.channels)
    print(f"{scenario.name}: ok ({len(scenario.agents)} agents, {len(scenario.channels)} channels, {n_slots} slots)")
    for note in competition_layout_notes(scenario):
        print(f"note: {note}")
    return 0


def cmd_slots(args: argparse.Namespace) -> int:
    scenario = _scenario(args.scenario)
    print("channel,layer,index,kind,offset_m,x,y,z,yaw")
    for cfg in scenario.channels:
        for s in wall_slots(cfg.spec, cfg.channel()):
            p = s.target_pose
            print(
                f"{s.channel_id},{s.layer},{s.index},{s.required_kind.value},{s.offset_m:.3f},"
                f"{p.x:.3f},{p.y:.3f},{p.z:.3f},{p.yaw:.4f}"
            )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wallsim", description="Brick-wall construction mission simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate a scenario and write logs")
    p_run.add_argument("scenario", help="scenario JSON file, or 'default' for the bundled layout")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--dt", type=float, default=0.05, help="tick length in seconds")
    p_run.add_argument("--max-time", type=float, default=3600.0, help="simulated seconds before giving up")
    p_run.add_argument("--out", default=None, help="directory for trajectory/servo/task CSVs and metrics.json")
    p_run.add_argument("--faults", default="", help="e.g. pick=0.3,place=0.1,conn=0.5 (conn is per minute)")
    p_run.set_defaults(func=cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    p_slots = sub.add_parser("slots", help="print the brick slots of every channel")
    p_slots.add_argument("scenario")
    p_slots.set_defaults(func=cmd_slots)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
