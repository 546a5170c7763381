"""
Classes and functions for running navigation experiments with lab.
"""

from pathlib import Path
import platform
import re
import shutil
import subprocess
import sys

import parse

from lab.environments import LocalEnvironment, SlurmEnvironment
from lab.experiment import Experiment, ARGPARSER
from lab.reports import Attribute, arithmetic_mean

from downward.reports.absolute import AbsoluteReport


DIR = Path(__file__).resolve().parent
REPO = DIR.parent
CONFIGS_DIR = REPO / "configs"
NAVIGATE = REPO / "src" / "navigate.py"
NODE = platform.node()
REMOTE = re.match(r"login\d+|n\d+", NODE)


def parse_args():
    ARGPARSER.add_argument("--trace", action="store_true", help="write per-decision traces")
    return ARGPARSER.parse_args()


ARGS = parse_args()

ATTRIBUTES = [
    Attribute("route_success", min_wins=False, function=arithmetic_mean, digits=2),
    Attribute("milestone_success", min_wins=False, function=arithmetic_mean, digits=2),
    Attribute("segment_duration", min_wins=True, function=arithmetic_mean, digits=2),
    Attribute("forward_time", min_wins=None, function=arithmetic_mean, digits=2),
    Attribute("mstp_decisions", min_wins=None, function=arithmetic_mean),
    "error", "navigate_exit_code", "node",
]

LEFT_COMMITS = Attribute("left_commits", min_wins=True, function=arithmetic_mean, digits=2)
FINAL_MILESTONE = Attribute("final_milestone_reached", min_wins=False, function=arithmetic_mean, digits=2)


class NavigationReport(AbsoluteReport):
    INFO_ATTRIBUTES = ["config", "budget_ticks", "command"]
    ERROR_ATTRIBUTES = [
        "domain", "problem", "algorithm", "unexplained_errors", "error",
        "node", "navigate_exit_code"]


def get_navigation_experiment(configs, methods, attributes=ATTRIBUTES, extra_options=None):
    """
    Add one run per (config, method, seed). The experiment name encodes the
    number of seeds, e.g. "2026-10-19-A-happy-path-10runs".
    """
    extra_options = list(extra_options or [])
    if ARGS.trace:
        extra_options.append("--trace")
    if REMOTE:
        environment = SlurmEnvironment(memory_per_cpu="3872M")
    else:
        environment = LocalEnvironment(processes=2)

    exp = Experiment(environment=environment)
    exp.add_parser(str(DIR / "nav-parser.py"))

    result = parse.parse("{base}-{runs:d}runs", exp.name)
    runs = result["runs"] if REMOTE else 1

    for config in configs:
        config_path = CONFIGS_DIR / f"{config}.json"
        exp.add_resource(f"config_{config}", config_path, symlink=True)
        for method in methods:
            for seed in range(runs):
                run = exp.add_run()
                cmd = [
                    sys.executable, str(NAVIGATE), "run",
                    "--seed", str(seed),
                    "--method", method,
                    "--out", "results",
                    str(config_path)] + extra_options
                run.add_command("navigate", cmd, time_limit=4 * 60 * 60, memory_limit=3 * 1024)
                problem = f"seed-{seed}"
                run.set_property("domain", config)
                run.set_property("problem", problem)
                run.set_property("algorithm", method)
                run.set_property("config", str(config_path))
                run.set_property("command", cmd)
                # Every run has to have a unique id in the form of a list.
                run.set_property("id", [config, problem, method])

    exp.add_step("build", exp.build)
    exp.add_step("start", exp.start_runs)
    exp.add_fetcher(name="fetch")

    if not REMOTE:
        exp.add_step(
            "remove-eval-dir", shutil.rmtree, exp.eval_dir,
            ignore_errors=True)

    report = Path(exp.eval_dir) / f"{exp.name}.html"
    exp.add_report(NavigationReport(attributes=attributes), outfile=report)
    exp.add_step("open-report", subprocess.call, ["xdg-open", report])

    return exp
