#! /usr/bin/env python

import json
import logging

from lab.parser import Parser


# Sectors 1-4 of 8 lie left of the screen center.
LEFT_SECTORS = 4


def error(content, props):
    if props.get("navigate_exit_code") == 0:
        props["error"] = "none"
    elif props.get("navigate_exit_code") == 2:
        props["error"] = "invalid-config"
    else:
        props["error"] = "some-error-occured"


def parse_report(content, props):
    try:
        bundle = json.loads(content)
    except ValueError:
        logging.error("results/report.json is not valid JSON")
        return
    rows = bundle["table"]["rows"]
    if len(rows) != 1:
        logging.error(f"expected a single (route, method) row, got {len(rows)}")
        return
    row = rows[0]
    props["route_success"] = row["rs_pct"] / 100
    props["milestone_success"] = row["ms_mean"] / 100
    props["segment_duration"] = row["seg_dur_mean"]
    props["forward_time"] = row["fwd_mean"]
    props["milestones_reached"] = sum(sum(r["milestones_reached"]) for r in bundle["runs"])
    props["mstp_decisions"] = sum(
        s["mstp_decisions"] for r in bundle["runs"] for s in r["segments"])
    props["terminations"] = [s["termination"] for r in bundle["runs"] for s in r["segments"]]
    props["final_milestone_reached"] = sum(r["milestones_reached"][-1] for r in bundle["runs"]) / len(bundle["runs"])
    props["left_commits"] = sum(
        1 for r in bundle["runs"] for s in r["segments"] for sector in s["committed_sectors"]
        if sector <= LEFT_SECTORS)


parser = Parser()
parser.add_pattern(
    "node", r"node: (.+)\n", type=str, file="driver.log", required=True)
parser.add_pattern(
    "navigate_exit_code", r"navigate exit code: (.+)\n", type=int, file="driver.log")
parser.add_pattern(
    "budget_ticks", r'"budget_ticks": (\d+)', type=int, file="results/config.json")
parser.add_function(parse_report, file="results/report.json")
parser.add_function(error)

parser.parse()
