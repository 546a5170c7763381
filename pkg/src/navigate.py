#! /usr/bin/env python3

"""
Generate test worlds, capture milestone libraries, run seeded navigation
experiments and aggregate their logs into report tables.
"""

import argparse
import logging
from pathlib import Path
import sys

import config
import harness
import scenarios
from runner import Runner
from sim import InvalidPose, Simulator
import utils
import world as worlds


EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3
SCENARIOS = scenarios.get_scenarios()


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--debug", action="store_true", help="Print debug info")
    subparsers = parser.add_subparsers(dest="command", required=True)

    worldgen = subparsers.add_parser("worldgen", help="Write a scenario world file")
    worldgen.add_argument("scenario", help=f"Scenario name ({', '.join(SCENARIOS)})")
    worldgen.add_argument("out_path", help="Path of the world file to write")
    worldgen.add_argument(
        "--seed", type=int, default=0, help="Texture seed (default: %(default)d)")

    capture = subparsers.add_parser("capture", help="Capture the milestone library of a world")
    capture.add_argument("world_file", help="World file written by worldgen")
    capture.add_argument("out_dir", help="Directory for templates and manifest.json")
    capture.add_argument(
        "--n-yaw", type=int, default=5, help="Templates per pitch (default: %(default)d)")
    capture.add_argument(
        "--yaw-step", type=float, default=5.0,
        help="Yaw offset between templates in degrees (default: %(default)s)")
    capture.add_argument(
        "--pitch", type=float, action="append", dest="pitches",
        help="Capture pitch in degrees, may be repeated (default: 0)")

    run = subparsers.add_parser("run", help="Run all (method, seed) cells of a config")
    run.add_argument("config", help="Run config (JSON)")
    run.add_argument("--seed", type=int, help="Run only this seed")
    run.add_argument("--method", choices=["NAIVE", "FSM", "FULL"], help="Run only this method")
    run.add_argument(
        "--jobs", type=int, default=1, help="Parallel runs (default: %(default)d)")
    run.add_argument("--trace", action="store_true", help="Write per-decision traces")
    run.add_argument(
        "--carry-memory", action="store_true", default=None,
        help="Keep the memory bank across the segments of a run")
    run.add_argument(
        "--out", default="results", help="Output directory (default: %(default)s)")

    report = subparsers.add_parser("report", help="Aggregate the run logs of a results directory")
    report.add_argument("log_dir", help="Directory written by 'run'")
    report.add_argument("--out", help="Output directory (default: log_dir)")

    return parser.parse_args(argv)


def cmd_worldgen(args):
    world = scenarios.generate_world(args.scenario, args.seed)
    worlds.write_world(world, args.out_path)
    logging.info(f"Wrote {args.scenario} (seed {args.seed}) to {args.out_path}")


def cmd_capture(args):
    world = worlds.read_world(args.world_file)
    sim = Simulator(world)
    groups = harness.capture_route(
        sim, world, n_yaw=args.n_yaw, yaw_step=args.yaw_step, pitches=args.pitches or [0.0])
    harness.save_library(groups, args.out_dir, world_name=world.name)
    logging.info(f"Captured {len(groups)} milestone groups into {args.out_dir}")


def _resolve(path, base):
    if path is None:
        return None
    path = Path(path)
    return path if path.is_absolute() else base / path


def cmd_run(args):
    overrides = {
        "seeds": None if args.seed is None else [args.seed],
        "methods": None if args.method is None else [args.method],
        "carry_memory": args.carry_memory,
    }
    cfg = config.load_config(args.config, overrides)
    base = Path(args.config).resolve().parent
    world_file = _resolve(cfg.world_file, base)
    if world_file is not None:
        world = worlds.read_world(world_file)
    else:
        world = scenarios.generate_world(cfg.scenario, cfg.world_seed)
    library = _resolve(cfg.library, base)
    if library is not None:
        groups = harness.load_library(library)
    else:
        groups = harness.capture_route(Simulator(world, cfg.sim), world)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    utils.dump_json(cfg.to_dict(), out_dir / "config.json")
    reports = Runner(cfg, world, groups, out_dir, trace=args.trace).run_all(args.jobs)
    table = harness.aggregate(reports)
    harness.emit_report(table, out_dir, reports)
    for row in table.rows:
        logging.info(
            f"{row.route} {row.method}: RS {row.rs_pct:.1f}%, "
            f"MS {row.ms_mean:.1f} +- {row.ms_std:.1f}%")


def cmd_report(args):
    log_dir = Path(args.log_dir)
    paths = sorted(p for p in (log_dir / "runs").glob("*.json") if not p.name.endswith("-memory.json"))
    if not paths:
        raise FileNotFoundError(f"no run logs found in {log_dir / 'runs'}")
    reports = [harness.RunReport.from_dict(utils.load_json(p)) for p in paths]
    reports.sort(key=lambda r: (r.route, r.method, r.seed))
    table = harness.aggregate(reports)
    harness.emit_report(table, Path(args.out or log_dir), reports)
    logging.info(f"Aggregated {len(reports)} runs")


COMMANDS = {
    "worldgen": cmd_worldgen,
    "capture": cmd_capture,
    "run": cmd_run,
    "report": cmd_report,
}


def main(argv=None):
    args = parse_args(argv)
    utils.setup_logging(args.debug)
    try:
        COMMANDS[args.command](args)
    except (config.ConfigError, scenarios.UnknownScenario, worlds.WorldFormatError) as err:
        print(f"Error: {err}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except (harness.MilestoneCaptureError, InvalidPose, OSError, ValueError) as err:
        print(f"Error: {err}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
