"""
Pulse controller, Schmitt-trigger forward gate, progress meter and the
seven-state navigation FSM.

The control loop calls, once per decision:

    state = observe(state, frame, mstp, params)
    prog = progress_update(state.ring, state.areas, params)
    state = fsm_step(state, mstp, prog, anchor_hits, params, sector_costs)
    action, state = act(state, mstp, params)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import enum
import math
from typing import Optional, Sequence, Tuple

import numpy as np

import perception
import vision


class Cam(enum.Enum):
    LEFT = "LEFT"
    UP = "UP"
    RIGHT = "RIGHT"
    DOWN = "DOWN"
    NONE = "NONE"


class ForwardDelta(enum.Enum):
    PRESS = "PRESS"
    RELEASE = "RELEASE"
    HOLD = "HOLD"


class FsmState(enum.Enum):
    SCAN = "SCAN"
    ALIGN = "ALIGN"
    ADVANCE = "ADVANCE"
    REFINE = "REFINE"
    RECOVER_LOCAL = "RECOVER_LOCAL"
    ESCAPE_STUCK = "ESCAPE_STUCK"
    LOOP_BREAKER = "LOOP_BREAKER"


FSM_STATES = list(FsmState)
FORWARD_CAPABLE = frozenset([FsmState.ALIGN, FsmState.ADVANCE, FsmState.REFINE])
STAGNATION_STATES = frozenset([FsmState.ADVANCE, FsmState.REFINE, FsmState.RECOVER_LOCAL])


@dataclass(frozen=True)
class Action:
    cam: Cam = Cam.NONE
    tap_count: int = 0
    forward_delta: ForwardDelta = ForwardDelta.HOLD

    def __post_init__(self):
        if self.tap_count < 0:
            raise ValueError(f"negative tap count {self.tap_count}")
        if (self.tap_count == 0) != (self.cam is Cam.NONE):
            raise ValueError(f"tap_count={self.tap_count} inconsistent with {self.cam.value}")

    def to_dict(self):
        return {"cam": self.cam.value, "taps": self.tap_count, "forward": self.forward_delta.value}


NO_ACTION = Action()


@dataclass(frozen=True)
class ErrorVec:
    ex: float
    ey: float

    @property
    def norm(self) -> float:
        return math.hypot(self.ex, self.ey)


@dataclass(frozen=True)
class ControlParams:
    eps_x_in: float = 0.03
    eps_x_out: float = 0.08
    eps_y_in: float = 0.05
    eps_y_out: float = 0.12
    k: float = 10.0
    n_max: int = 4
    min_taps: int = 1
    tau_on: int = 5
    delta: int = 10
    t_stag: int = 45
    ssim_stag: float = 0.98
    flow_stag: float = 0.3
    mstp_lost_limit: int = 12
    loop_revisits: int = 3
    stable_frames: int = 3
    stable_iou: float = 0.5
    ring_size: int = 16
    scan_taps: int = 1
    recover_pause: int = 6
    recover_pulses: int = 2
    escape_min_deg: float = 90.0
    escape_max_deg: float = 180.0
    escape_burst: int = 8
    anchor_hamming: int = 6
    anchor_period: int = 15
    anchor_min_gap: int = 30
    enable_recovery: bool = True
    # Mirrors of the simulator's camera model, kept in sync by the config layer.
    yaw_per_tap_deg: float = 5.0
    fov_deg: float = 90.0
    screen_width: int = 320
    screen_height: int = 180

    def __post_init__(self):
        if not self.eps_x_in < self.eps_x_out:
            raise ValueError("eps_x_in must be smaller than eps_x_out")
        if not self.eps_y_in < self.eps_y_out:
            raise ValueError("eps_y_in must be smaller than eps_y_out")
        if self.k <= 0:
            raise ValueError("k must be positive")
        if self.n_max < 1:
            raise ValueError("n_max must be at least 1")
        if not 0 <= self.min_taps <= self.n_max:
            raise ValueError("min_taps must lie in [0, n_max]")
        if self.ring_size < self.delta + 1:
            raise ValueError("ring_size must hold delta + 1 frames")
        if self.recover_pause + self.recover_pulses > self.delta:
            raise ValueError("the recovery maneuver must fit in the delta window")
        if not 0 < self.escape_min_deg <= self.escape_max_deg:
            raise ValueError("invalid escape turn range")

    @property
    def screen(self):
        return (self.screen_width, self.screen_height)


@dataclass(frozen=True)
class ProgressSignals:
    area_delta: float
    ssim_recent: float
    flow_mag: float

    def stalled(self, p: ControlParams) -> bool:
        return (self.ssim_recent > p.ssim_stag and self.flow_mag < p.flow_stag
                and self.area_delta <= 0)

    def to_dict(self):
        return {"area_delta": self.area_delta, "ssim": self.ssim_recent,
                "flow": None if math.isinf(self.flow_mag) else self.flow_mag}


NEUTRAL_PROGRESS = ProgressSignals(area_delta=1.0, ssim_recent=0.0, flow_mag=math.inf)


@dataclass(frozen=True)
class ControllerState:
    fsm: FsmState = FsmState.SCAN
    forward: bool = False
    forward_prev: bool = False
    aligned_since: int = 0
    centered_latch: bool = False
    stagnation_clock: int = 0
    mstp_lost_count: int = 0
    scan_sweep_progress: float = 0.0
    stable_count: int = 0
    prev_box: Optional[perception.BBox] = None
    last_side: Cam = Cam.NONE
    ring: Tuple[vision.Frame, ...] = field(default=(), repr=False)
    areas: Tuple[float, ...] = field(default=(), repr=False)
    state_dwell: Tuple[int, ...] = (0,) * len(FSM_STATES)
    maneuver_step: int = 0
    turn_dir: Cam = Cam.NONE
    turn_taps_left: int = 0
    burst_remaining: int = 0
    target_sector: Optional[int] = None
    escapes: int = 0
    seed: int = 0

    @property
    def frames(self) -> int:
        return sum(self.state_dwell)

    def dwell(self) -> dict:
        return {s.value: n for s, n in zip(FSM_STATES, self.state_dwell)}


def initial_state(seed=0) -> ControllerState:
    return ControllerState(seed=seed)


def error_vector(mstp_center, screen) -> ErrorVec:
    u, v = mstp_center
    width, height = screen
    return ErrorVec((u - width / 2) / width, (v - height / 2) / height)


def _mstp_error(mstp: Optional[perception.MstpSelection], p: ControlParams) -> Optional[ErrorVec]:
    if mstp is None:
        return None
    return error_vector((mstp.box.cx, mstp.box.cy), p.screen)


def pulse_count(e: ErrorVec, p: ControlParams) -> int:
    return int(min(p.n_max, max(0, math.floor(p.k * e.norm))))


def _inside(e: ErrorVec, eps_x, eps_y) -> bool:
    return abs(e.ex) < eps_x and abs(e.ey) < eps_y


def pulse_plan(e: ErrorVec, p: ControlParams, centered_latch: bool):
    """Plan one directional pulse burst with a hysteresis dead zone.

    Returns (direction, taps, new_latch).
    """
    if centered_latch and max(abs(e.ex) / p.eps_x_out, abs(e.ey) / p.eps_y_out) < 1:
        return Cam.NONE, 0, True
    if _inside(e, p.eps_x_in, p.eps_y_in):
        return Cam.NONE, 0, True
    taps = max(pulse_count(e, p), p.min_taps)
    if taps == 0:
        return Cam.NONE, 0, False
    if abs(e.ex) / p.eps_x_out >= abs(e.ey) / p.eps_y_out:
        direction = Cam.LEFT if e.ex < 0 else Cam.RIGHT
    else:
        direction = Cam.UP if e.ey < 0 else Cam.DOWN
    return direction, taps, False


def heading_aligned(e: Optional[ErrorVec], forward: bool, p: ControlParams, latched=False) -> bool:
    """Inner band to become aligned, outer band to stay aligned while moving or latched."""
    if e is None:
        return False
    if abs(e.ex) < p.eps_x_in:
        return True
    return (forward or latched) and abs(e.ex) < p.eps_x_out


def update_forward_gate(state: ControllerState, heading_aligned: bool, p: ControlParams) -> bool:
    aligned_since = state.aligned_since + 1 if heading_aligned else 0
    return state.fsm in FORWARD_CAPABLE and aligned_since >= p.tau_on


def observe(state: ControllerState, frame: vision.Frame,
            mstp: Optional[perception.MstpSelection], p: ControlParams) -> ControllerState:
    """Push the frame and the MSTP box area into the ring buffer."""
    area = mstp.box.area if mstp is not None else 0.0
    return replace(
        state,
        ring=(state.ring + (frame,))[-p.ring_size:],
        areas=(state.areas + (area,))[-p.ring_size:],
    )


def progress_update(ring: Sequence[vision.Frame], areas: Sequence[float],
                    p: ControlParams) -> ProgressSignals:
    if len(ring) < p.delta + 1:
        return NEUTRAL_PROGRESS
    area_now = areas[-1]
    area_then = areas[-1 - p.delta]
    return ProgressSignals(
        area_delta=(area_now - area_then) / max(area_then, 1.0),
        ssim_recent=vision.ssim(ring[-1], ring[-1 - p.delta]),
        flow_mag=vision.median_flow(ring[-2], ring[-1]),
    )


def _turn_taps_for_sector(sector: int, sectors: int, p: ControlParams):
    focal = (p.screen_width / 2) / math.tan(math.radians(p.fov_deg / 2))
    x = (sector - 0.5) * p.screen_width / sectors
    angle = math.degrees(math.atan((x - p.screen_width / 2) / focal))
    taps = max(1, int(round(abs(angle) / p.yaw_per_tap_deg)))
    return (Cam.LEFT if angle < 0 else Cam.RIGHT), taps


def choose_loop_sector(sector_costs: Sequence[float]) -> int:
    """Lowest cost sector; ties go to the sector farthest from the center."""
    sectors = len(sector_costs)
    middle = (sectors + 1) / 2
    return min(range(1, sectors + 1),
               key=lambda s: (sector_costs[s - 1], -abs(s - middle), s))


def _escape_turn(state: ControllerState, p: ControlParams):
    rng = np.random.default_rng([state.seed, state.escapes])
    angle = rng.uniform(p.escape_min_deg, p.escape_max_deg)
    direction = Cam.LEFT if rng.integers(2) == 0 else Cam.RIGHT
    return direction, max(1, int(round(angle / p.yaw_per_tap_deg)))


def _enter(state: ControllerState, fsm: FsmState, **changes) -> ControllerState:
    if fsm is FsmState.SCAN:
        changes.setdefault("scan_sweep_progress", 0.0)
    if fsm not in STAGNATION_STATES:
        changes.setdefault("stagnation_clock", 0)
    if fsm not in FORWARD_CAPABLE:
        changes.setdefault("centered_latch", False)
    return replace(state, fsm=fsm, **changes)


def _away_from(side: Cam) -> Cam:
    return Cam.RIGHT if side is Cam.LEFT else Cam.LEFT


def fsm_step(state: ControllerState, mstp: Optional[perception.MstpSelection],
             prog: ProgressSignals, anchor_hits: int, p: ControlParams,
             sector_costs: Optional[Sequence[float]] = None) -> ControllerState:
    """One FSM transition. Pure: the same arguments always give the same state."""
    e = _mstp_error(mstp, p)

    if mstp is not None and state.prev_box is not None \
            and perception.iou(mstp.box, state.prev_box) >= p.stable_iou:
        stable_count = state.stable_count + 1
    else:
        stable_count = 1 if mstp is not None else 0
    last_side = state.last_side
    if e is not None and e.ex != 0:
        last_side = Cam.LEFT if e.ex < 0 else Cam.RIGHT
    stalled = prog.stalled(p)
    clock = state.stagnation_clock + 1 if stalled and state.fsm in STAGNATION_STATES else 0

    s = replace(
        state,
        forward_prev=state.forward,
        stable_count=stable_count,
        prev_box=mstp.box if mstp is not None else None,
        mstp_lost_count=0 if mstp is not None else state.mstp_lost_count + 1,
        centered_latch=state.centered_latch and stable_count > 1,
        last_side=last_side,
        stagnation_clock=clock,
    )
    lost = s.mstp_lost_count >= p.mstp_lost_limit
    stagnant = s.stagnation_clock >= p.t_stag

    if p.enable_recovery and anchor_hits >= p.loop_revisits and s.fsm is not FsmState.LOOP_BREAKER:
        costs = sector_costs if sector_costs is not None else [0.0] * perception.DEFAULT_SECTORS
        target = choose_loop_sector(costs)
        direction, taps = _turn_taps_for_sector(target, len(costs), p)
        s = _enter(s, FsmState.LOOP_BREAKER, turn_dir=direction, turn_taps_left=taps,
                   target_sector=target, burst_remaining=0)

    elif s.fsm is FsmState.SCAN:
        if mstp is not None and s.stable_count >= p.stable_frames:
            s = _enter(s, FsmState.ALIGN, aligned_since=0)
        elif s.scan_sweep_progress >= 360.0:
            if p.enable_recovery:
                direction, taps = _escape_turn(s, p)
                s = _enter(s, FsmState.ESCAPE_STUCK, turn_dir=direction, turn_taps_left=taps,
                           escapes=s.escapes + 1)
            else:
                s = replace(s, scan_sweep_progress=0.0)

    elif s.fsm is FsmState.ALIGN:
        if lost:
            s = _enter(s, FsmState.SCAN)
        else:
            aligned = heading_aligned(e, False, p, s.centered_latch)
            if update_forward_gate(s, aligned, p):
                s = _enter(s, FsmState.ADVANCE)
            s = replace(s, aligned_since=s.aligned_since + 1 if aligned else 0)

    elif s.fsm is FsmState.ADVANCE and s.burst_remaining > 0:
        remaining = s.burst_remaining - 1
        s = _enter(s, FsmState.SCAN) if remaining == 0 else s
        s = replace(s, burst_remaining=remaining)

    elif s.fsm in (FsmState.ADVANCE, FsmState.REFINE):
        if lost:
            s = _enter(s, FsmState.SCAN)
        elif stagnant and p.enable_recovery:
            s = _enter(s, FsmState.RECOVER_LOCAL, maneuver_step=0,
                       turn_dir=_away_from(s.last_side))
        elif e is not None:
            aligned = heading_aligned(e, s.forward, p)
            if abs(e.ex) > p.eps_x_out:
                s = _enter(s, FsmState.ALIGN)
            elif p.enable_recovery and s.fsm is FsmState.ADVANCE and abs(e.ex) > p.eps_x_in:
                s = _enter(s, FsmState.REFINE)
            elif s.fsm is FsmState.REFINE and _inside(e, p.eps_x_in, p.eps_y_in):
                s = _enter(s, FsmState.ADVANCE)
            s = replace(s, aligned_since=s.aligned_since + 1 if aligned else 0)

    elif s.fsm is FsmState.RECOVER_LOCAL:
        if s.maneuver_step >= p.recover_pause + p.recover_pulses:
            # ssim_recent reaches back past the start of the maneuver.
            still_stuck = prog.ssim_recent > p.ssim_stag and prog.area_delta <= 0
            if still_stuck:
                direction, taps = _escape_turn(s, p)
                s = _enter(s, FsmState.ESCAPE_STUCK, turn_dir=direction, turn_taps_left=taps,
                           escapes=s.escapes + 1)
            else:
                s = _enter(s, FsmState.SCAN)

    elif s.fsm is FsmState.ESCAPE_STUCK:
        if s.turn_taps_left == 0:
            s = _enter(s, FsmState.ADVANCE, burst_remaining=p.escape_burst)

    elif s.fsm is FsmState.LOOP_BREAKER:
        if s.turn_taps_left == 0:
            s = _enter(s, FsmState.SCAN, target_sector=None)

    if s.fsm is FsmState.ADVANCE and s.burst_remaining > 0:
        forward = True
    elif s.fsm in (FsmState.ADVANCE, FsmState.REFINE):
        # Coast on the previous gate while the MSTP is briefly lost.
        forward = s.forward if e is None else s.aligned_since >= p.tau_on
    else:
        forward = False
    if s.fsm not in FORWARD_CAPABLE:
        s = replace(s, aligned_since=0)

    index = FSM_STATES.index(s.fsm)
    dwell = s.state_dwell[:index] + (s.state_dwell[index] + 1,) + s.state_dwell[index + 1:]
    return replace(s, forward=forward, state_dwell=dwell)


def _forward_delta(before: bool, after: bool) -> ForwardDelta:
    if after and not before:
        return ForwardDelta.PRESS
    if before and not after:
        return ForwardDelta.RELEASE
    return ForwardDelta.HOLD


def act(state: ControllerState, mstp: Optional[perception.MstpSelection], p: ControlParams):
    """Compose the camera pulse of the current state with the forward toggle.

    Returns (Action, state) where the state carries the updated latch and
    maneuver counters.
    """
    delta = _forward_delta(state.forward_prev, state.forward)
    cam, taps = Cam.NONE, 0

    if state.fsm is FsmState.SCAN:
        cam, taps = Cam.LEFT, p.scan_taps
        state = replace(state, scan_sweep_progress=state.scan_sweep_progress
                        + p.scan_taps * p.yaw_per_tap_deg)

    elif state.fsm in FORWARD_CAPABLE:
        if state.burst_remaining == 0 and mstp is not None:
            cam, taps, latch = pulse_plan(_mstp_error(mstp, p), p, state.centered_latch)
            state = replace(state, centered_latch=latch)

    elif state.fsm is FsmState.RECOVER_LOCAL:
        if state.maneuver_step >= p.recover_pause:
            cam, taps = state.turn_dir, p.n_max
        state = replace(state, maneuver_step=state.maneuver_step + 1)

    else:
        taps = min(p.n_max, state.turn_taps_left)
        cam = state.turn_dir if taps > 0 else Cam.NONE
        state = replace(state, turn_taps_left=state.turn_taps_left - taps)

    if taps == 0:
        cam = Cam.NONE
    return Action(cam, taps, delta), state


class LoopAnchors:
    """Visited-place anchors keyed by perceptual hash.

    A new anchor is laid every `period` frames when no existing anchor
    matches. A match counts as a revisit only when the anchor has not been
    seen for at least `min_gap` frames.
    """

    def __init__(self, max_hamming=6, period=15, min_gap=30):
        self.max_hamming = max_hamming
        self.period = period
        self.min_gap = min_gap
        self.anchors = []

    @classmethod
    def from_params(cls, p: ControlParams):
        return cls(p.anchor_hamming, p.anchor_period, p.anchor_min_gap)

    def _match(self, h: int):
        for anchor in self.anchors:
            if vision.hamming(anchor["hash"], h) <= self.max_hamming:
                return anchor
        return None

    def observe(self, h: int, t: int) -> int:
        anchor = self._match(h)
        if anchor is None:
            if t % self.period == 0:
                self.anchors.append({"hash": h, "hits": 0, "last_seen": t})
            return 0
        if t - anchor["last_seen"] >= self.min_gap:
            anchor["hits"] += 1
        anchor["last_seen"] = t
        return anchor["hits"]

    def reset(self, h: int):
        anchor = self._match(h)
        if anchor is not None:
            anchor["hits"] = 0
