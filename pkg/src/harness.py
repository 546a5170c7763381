"""
Milestone evaluation protocol: template capture and matching, segment and
route execution with timeout repositioning, aggregation and report output.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from agent import NavigationAgent
from controller import Cam, ForwardDelta
import vision
from world import AvatarPose


MILESTONE = "MILESTONE"
TIMEOUT = "TIMEOUT"
MANUAL = "MANUAL"

TEMPLATE_WIDTH = 64
TEMPLATE_HEIGHT = 36
DEFAULT_THRESHOLD = 0.80
DEFAULT_CHECK_PERIOD = 10
TICKS_PER_SECOND = 30
OVERALL_COLUMNS = ["route", "method", "rs_pct", "ms_mean", "ms_std",
                   "seg_dur_mean", "seg_dur_std", "fwd_mean", "fwd_std"]


class MilestoneCaptureError(Exception):
    pass


@dataclass
class MilestoneGroup:
    id: str
    templates: List[vision.Frame]
    save_pose: AvatarPose
    group_index: int

    def __post_init__(self):
        if not self.templates:
            raise MilestoneCaptureError(f"milestone {self.id} has no templates")


def _template(frame: vision.Frame) -> vision.Frame:
    pixels = vision.resize_bilinear(frame.as_float(), TEMPLATE_HEIGHT, TEMPLATE_WIDTH)
    return vision.Frame.from_array(pixels)


def capture_milestone(sim, pose: AvatarPose, n_yaw=5, yaw_step=5.0, pitches=(0.0,),
                      save_pose: Optional[AvatarPose] = None, group_id="m", group_index=0) -> MilestoneGroup:
    """Render templates over a short yaw sweep (and optional pitches) around pose."""
    templates = []
    for pitch in pitches:
        for i in range(n_yaw):
            offset = (i - (n_yaw - 1) / 2) * yaw_step
            view = AvatarPose(pose.x, pose.y, pose.yaw + offset, pitch)
            template = _template(sim.render_at(view))
            if template.pixels.min() == template.pixels.max():
                raise MilestoneCaptureError(
                    f"milestone {group_id}: constant view at yaw offset {offset:+.1f}, "
                    f"pitch {pitch:+.1f} (facing a blank wall?)")
            templates.append(template)
    return MilestoneGroup(group_id, templates, save_pose or pose, group_index)


def capture_route(sim, world, **sweep) -> List[MilestoneGroup]:
    """One group per route milestone; each save pose is where its segment starts."""
    groups = []
    start = world.spawn
    for index, (milestone_id, pose) in enumerate(world.milestones):
        groups.append(capture_milestone(sim, pose, save_pose=start, group_id=milestone_id,
                                        group_index=index, **sweep))
        start = pose
    return groups


def check_milestone(frame: vision.Frame, group: MilestoneGroup, threshold=DEFAULT_THRESHOLD) -> bool:
    return max(vision.ncc_score(frame, template) for template in group.templates) > threshold


def save_library(groups: Sequence[MilestoneGroup], out_dir, world_name=""):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"world": world_name, "groups": []}
    for group in groups:
        files = []
        for k, template in enumerate(group.templates):
            name = f"{group.id}-{k}.pgm"
            vision.write_pgm(template, out_dir / name)
            files.append(name)
        manifest["groups"].append({
            "id": group.id,
            "group_index": group.group_index,
            "save_pose": group.save_pose.to_list(),
            "templates": files,
        })
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, separators=(",", ": "), sort_keys=True)


def load_library(library_dir) -> List[MilestoneGroup]:
    library_dir = Path(library_dir)
    with open(library_dir / "manifest.json") as f:
        manifest = json.load(f)
    groups = [
        MilestoneGroup(
            id=entry["id"],
            templates=[vision.read_pgm(library_dir / name) for name in entry["templates"]],
            save_pose=AvatarPose.from_list(entry["save_pose"]),
            group_index=entry["group_index"],
        )
        for entry in manifest["groups"]
    ]
    return sorted(groups, key=lambda g: g.group_index)


@dataclass
class SegmentLog:
    from_milestone: str
    to_milestone: str
    start_tick: int
    end_tick: int = 0
    termination: str = TIMEOUT
    frames: int = 0
    mstp_decisions: int = 0
    forward_presses: int = 0
    forward_time: int = 0
    cam_histogram: Dict[str, int] = field(
        default_factory=lambda: {c.value: 0 for c in Cam if c is not Cam.NONE})
    fsm_dwell: Dict[str, int] = field(default_factory=dict)
    committed_sectors: List[int] = field(default_factory=list)

    @property
    def duration(self) -> int:
        return self.end_tick - self.start_tick

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class RunReport:
    route: str
    method: str
    seed: int
    segments: List[SegmentLog]
    milestones_reached: List[bool]

    @property
    def route_success(self) -> bool:
        return all(self.milestones_reached)

    def to_dict(self):
        return {
            "route": self.route,
            "method": self.method,
            "seed": self.seed,
            "segments": [s.to_dict() for s in self.segments],
            "milestones_reached": self.milestones_reached,
            "route_success": self.route_success,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["route"], data["method"], data["seed"],
                   [SegmentLog.from_dict(s) for s in data["segments"]],
                   list(data["milestones_reached"]))


def run_segment(sim, agent: NavigationAgent, target: MilestoneGroup, budget_ticks: int,
                check_period=DEFAULT_CHECK_PERIOD, threshold=DEFAULT_THRESHOLD,
                from_milestone="spawn", stop_event=None, trace=None) -> SegmentLog:
    """Drive the agent until the target is seen, the budget is spent or a stop is requested.

    The milestone check runs before acting on every check_period-th decision.
    """
    ticks_per_decision = sim.params.ticks_per_decision
    if budget_ticks < 0 or budget_ticks % ticks_per_decision:
        raise ValueError(
            f"budget_ticks={budget_ticks} must be a nonnegative multiple of {ticks_per_decision}")
    log = SegmentLog(from_milestone, target.id, start_tick=sim.tick)
    while True:
        if stop_event is not None and stop_event.is_set():
            log.termination = MANUAL
            break
        if sim.tick - log.start_tick >= budget_ticks:
            log.termination = TIMEOUT
            break
        frame = sim.render()
        checked = log.frames % check_period == 0
        if checked and check_milestone(frame, target, threshold):
            log.termination = MILESTONE
            break
        action = agent.decide(frame, sim.visible_portals())
        sim.step(action)
        log.frames += 1
        if agent.last_record["mstp"] is not None:
            log.mstp_decisions += 1
        if action.forward_delta is ForwardDelta.PRESS:
            log.forward_presses += 1
        if sim.pose.forward_held:
            log.forward_time += ticks_per_decision
        if action.cam is not Cam.NONE:
            log.cam_histogram[action.cam.value] += action.tap_count
        if agent.last_record["committed_sector"] is not None:
            log.committed_sectors.append(agent.last_record["committed_sector"])
        if trace is not None:
            trace.append(dict(agent.last_record, target=target.id, checked=checked))
    log.end_tick = sim.tick
    log.fsm_dwell = {state: frames * ticks_per_decision
                     for state, frames in agent.state.dwell().items()}
    logging.debug(f"Segment {from_milestone} -> {target.id}: {log.termination} after {log.frames} decisions")
    return log


def run_route(sim, agent: NavigationAgent, groups: Sequence[MilestoneGroup], budget_ticks: int,
              seed=0, route="", check_period=DEFAULT_CHECK_PERIOD, threshold=DEFAULT_THRESHOLD,
              carry_memory=False, stop_event=None, trace=None) -> RunReport:
    """One pass over the ordered milestone groups.

    A timed-out segment marks its milestone failed and the avatar is moved to
    the save pose of the next group. Controller state is reset and forward is
    released at the start of every segment.
    """
    segments = []
    reached = [False] * len(groups)
    previous = "spawn"
    for j, group in enumerate(groups):
        agent.reset(keep_memory=carry_memory)
        sim.release_forward()
        log = run_segment(sim, agent, group, budget_ticks, check_period, threshold,
                          from_milestone=previous, stop_event=stop_event, trace=trace)
        segments.append(log)
        reached[j] = log.termination == MILESTONE
        if log.termination == MANUAL:
            break
        if log.termination == TIMEOUT and j + 1 < len(groups):
            sim.teleport(groups[j + 1].save_pose)
        previous = group.id
    return RunReport(route, agent.method, seed, segments, reached)


@dataclass
class MetricsRow:
    route: str
    method: str
    runs: int
    rs_pct: float
    ms_mean: float
    ms_std: float
    seg_dur_mean: float
    seg_dur_std: float
    fwd_mean: float
    fwd_std: float
    per_milestone: List[float]


@dataclass
class MetricsTable:
    rows: List[MetricsRow]
    ticks_per_second: float = TICKS_PER_SECOND

    def to_dict(self):
        return {"rows": [asdict(r) for r in self.rows], "ticks_per_second": self.ticks_per_second}

    @classmethod
    def from_dict(cls, data):
        return cls([MetricsRow(**row) for row in data["rows"]], data["ticks_per_second"])


def _mean_std(values):
    if not values:
        return 0.0, 0.0
    array = np.asarray(values, dtype=np.float64)
    return float(array.mean()), float(array.std())


def aggregate(reports: Sequence[RunReport], ticks_per_second=TICKS_PER_SECOND) -> MetricsTable:
    """Route success, per-milestone success and segment statistics per (route, method).

    Standard deviations are population deviations.
    """
    if not reports:
        raise ValueError("cannot aggregate an empty list of run reports")
    cells = {}
    for report in reports:
        cells.setdefault((report.route, report.method), []).append(report)

    rows = []
    for (route, method), runs in sorted(cells.items()):
        milestones = max(len(r.milestones_reached) for r in runs)
        per_milestone = []
        for j in range(milestones):
            attempts = [r for r in runs if len(r.segments) > j]
            if attempts:
                successes = sum(r.milestones_reached[j] for r in attempts)
                per_milestone.append(100.0 * successes / len(attempts))
        segments = [s for r in runs for s in r.segments]
        ms_mean, ms_std = _mean_std(per_milestone)
        dur_mean, dur_std = _mean_std([s.duration / ticks_per_second for s in segments])
        fwd_mean, fwd_std = _mean_std([s.forward_time / ticks_per_second for s in segments])
        rows.append(MetricsRow(
            route=route,
            method=method,
            runs=len(runs),
            rs_pct=100.0 * sum(r.route_success for r in runs) / len(runs),
            ms_mean=ms_mean,
            ms_std=ms_std,
            seg_dur_mean=dur_mean,
            seg_dur_std=dur_std,
            fwd_mean=fwd_mean,
            fwd_std=fwd_std,
            per_milestone=per_milestone,
        ))
    return MetricsTable(rows, ticks_per_second)


def emit_report(table: MetricsTable, out_dir, reports: Sequence[RunReport] = ()):
    """Write overall.csv, per-milestone.csv and report.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "overall.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(OVERALL_COLUMNS)
        for row in table.rows:
            writer.writerow([row.route, row.method] + [
                f"{getattr(row, column):.2f}" for column in OVERALL_COLUMNS[2:]])

    width = max((len(row.per_milestone) for row in table.rows), default=0)
    with open(out_dir / "per-milestone.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["route", "method"] + [f"M{j + 1}" for j in range(width)])
        for row in table.rows:
            values = [f"{v:.1f}" for v in row.per_milestone]
            writer.writerow([row.route, row.method] + values + [""] * (width - len(values)))

    bundle = {
        "table": table.to_dict(),
        "runs": [r.to_dict() for r in reports],
        "notes": f"std values are population deviations; durations in seconds at "
                 f"{table.ticks_per_second} ticks/s",
    }
    with open(out_dir / "report.json", "w") as f:
        json.dump(bundle, f, indent=2, separators=(",", ": "), sort_keys=True)


def load_report(path):
    """Restore (MetricsTable, run reports) from a report.json bundle."""
    with open(Path(path)) as f:
        bundle = json.load(f)
    return (MetricsTable.from_dict(bundle["table"]),
            [RunReport.from_dict(r) for r in bundle["runs"]])
