"""
Per-frame decision pipeline: perceive, memory, select, progress, fsm, act.
"""

from __future__ import annotations

from dataclasses import replace
import logging
from typing import Optional

import controller
from controller import ControlParams, FsmState, LoopAnchors
from memory import BankParams, MemoryBank
import perception
from perception import NoiseModel, ScoreWeights, SectorHistogram
import vision


METHODS = ["NAIVE", "FSM", "FULL"]


def method_settings(method: str, control: ControlParams):
    """Return (control params, memory enabled) for an agent variant."""
    if method == "NAIVE":
        return replace(control, enable_recovery=False), False
    if method == "FSM":
        return replace(control, enable_recovery=True), False
    if method == "FULL":
        return replace(control, enable_recovery=True), True
    raise ValueError(f"unknown method {method!r}, choose from {', '.join(METHODS)}")


class NavigationAgent:
    def __init__(self, method="FULL", control=ControlParams(), bank=BankParams(),
                 weights=ScoreWeights(), noise=NoiseModel(), seed=0):
        self.method = method
        self.control, memory_enabled = method_settings(method, control)
        self.weights = weights
        self.noise = noise
        self.seed = seed
        self.rng = noise.rng(seed)
        self.bank: Optional[MemoryBank] = MemoryBank(bank) if memory_enabled else None
        self.last_record = None
        # Memory timestamps run across segments so a carried bank stays consistent.
        self.clock = 0
        self.reset()

    def reset(self, keep_memory=False):
        """Start a new segment: fresh controller, history and anchors."""
        self.state = controller.initial_state(self.seed)
        self.hist = SectorHistogram(self.weights.sectors)
        self.anchors = LoopAnchors.from_params(self.control)
        self.prev_mstp = None
        self.frame_index = 0
        if self.bank is not None and not keep_memory:
            self.bank.reset()

    def _penalty(self, z, now):
        if self.bank is None:
            return perception.no_penalty
        return lambda sector: self.bank.penalty(z, sector, now)

    def decide(self, frame: vision.Frame, projections) -> controller.Action:
        t = self.frame_index
        now = self.clock
        p = self.control
        candidates = perception.simulated_detect(
            projections, self.noise, self.rng, screen=p.screen,
            sectors=self.weights.sectors, frame=frame)
        h = vision.phash64(frame)
        z = vision.embed(frame)

        if self.bank is not None:
            self.bank.promote(now)
            if now % self.bank.params.insert_period == 0:
                preferred = self.prev_mstp.sector if self.prev_mstp is not None else None
                self.bank.consider_insert(z, h, preferred, now)

        penalty_fn = self._penalty(z, now)
        mstp = perception.select_mstp(candidates, self.prev_mstp, self.hist, self.weights,
                                      penalty_fn=penalty_fn, t=t)
        self.hist.push(mstp.sector if mstp is not None else None)
        if self.bank is not None:
            self.bank.label_due(mstp, now)

        self.state = controller.observe(self.state, frame, mstp, p)
        prog = controller.progress_update(self.state.ring, self.state.areas, p)
        hits = self.anchors.observe(h, t) if p.enable_recovery else 0
        costs = [penalty_fn(s) + (1.0 if self.hist.explored(s) else 0.0)
                 for s in range(1, self.weights.sectors + 1)]

        before = self.state.fsm
        committed = None
        self.state = controller.fsm_step(self.state, mstp, prog, hits, p, costs)
        if self.state.fsm is FsmState.LOOP_BREAKER and before is not FsmState.LOOP_BREAKER:
            self.anchors.reset(h)
            committed = self.state.target_sector
            logging.debug(f"Frame {t}: loop detected, turning to sector {self.state.target_sector}")
        if self.state.fsm is FsmState.ADVANCE and before is FsmState.ALIGN and mstp is not None:
            committed = mstp.sector
            if self.bank is not None:
                self.bank.associate_decision(mstp.sector, mstp.box, now)

        action, self.state = controller.act(self.state, mstp, p)
        assert not self.state.forward or self.state.fsm in controller.FORWARD_CAPABLE

        self.last_record = {
            "t": t,
            "fsm": self.state.fsm.value,
            "forward": self.state.forward,
            "mstp": None if mstp is None else {
                "box": mstp.box.to_list(), "sector": mstp.sector,
                "score": mstp.final_score, "source": mstp.candidate.source},
            "candidates": len(candidates),
            "committed_sector": committed,
            "progress": prog.to_dict(),
            "action": action.to_dict(),
            "memory": None if self.bank is None else len(self.bank),
        }
        self.prev_mstp = mstp
        self.frame_index += 1
        self.clock += 1
        return action
