from dataclasses import replace
import math

import numpy as np
import pytest

import controller
from controller import Action, Cam, ControlParams, ErrorVec, ForwardDelta, FsmState, ProgressSignals
from perception import BBox, MstpSelection, STPCandidate
import vision


P = ControlParams()
STALLED = ProgressSignals(area_delta=0.0, ssim_recent=1.0, flow_mag=0.0)


def mstp_at(cx, cy=90.0, half=20.0, t=0):
    box = BBox(cx - half, cy - half, cx + half, cy + half)
    return MstpSelection(STPCandidate(box, 0.9, np.zeros(64), 1), 0.9, t)


CENTERED = mstp_at(160.0)


def step(state, mstp, prog=controller.NEUTRAL_PROGRESS, hits=0, p=P):
    return controller.fsm_step(state, mstp, prog, hits, p)


@pytest.mark.parametrize("center, screen, expected", [
    ((400, 300), (800, 600), (0.0, 0.0)),
    ((0, 0), (800, 600), (-0.5, -0.5)),
    ((600, 450), (800, 600), (0.25, 0.25)),
])
def test_error_vector(center, screen, expected):
    e = controller.error_vector(center, screen)
    assert (e.ex, e.ey) == pytest.approx(expected)


def test_pulse_count_matches_formula():
    rng = np.random.default_rng(0)
    for _ in range(10000):
        ex, ey = rng.uniform(-1.0, 1.0, size=2)
        k = rng.uniform(0.1, 50.0)
        n_max = int(rng.integers(1, 37))
        p = ControlParams(k=k, n_max=n_max)
        expected = min(n_max, max(0, math.floor(k * math.hypot(ex, ey))))
        assert controller.pulse_count(ErrorVec(ex, ey), p) == expected


def test_no_pulses_inside_latched_band():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        e = ErrorVec(rng.uniform(-P.eps_x_out, P.eps_x_out) * 0.99,
                     rng.uniform(-P.eps_y_out, P.eps_y_out) * 0.99)
        cam, taps, latch = controller.pulse_plan(e, P, centered_latch=True)
        assert (cam, taps, latch) == (Cam.NONE, 0, True)


def test_forward_gate():
    waiting = controller.ControllerState(fsm=FsmState.ADVANCE, aligned_since=P.tau_on - 1)
    assert controller.update_forward_gate(waiting, True, P)
    assert not controller.update_forward_gate(waiting, False, P)
    scanning = replace(waiting, fsm=FsmState.SCAN)
    assert not controller.update_forward_gate(scanning, True, P)


def test_pulse_plan_centered():
    assert controller.pulse_plan(ErrorVec(0.0, 0.0), P, False) == (Cam.NONE, 0, True)


def test_pulse_plan_proportional_taps():
    assert controller.pulse_plan(ErrorVec(0.25, 0.0), P, False) == (Cam.RIGHT, 2, False)


def test_pulse_plan_hysteresis_band():
    assert controller.pulse_plan(ErrorVec(0.05, 0.0), P, True) == (Cam.NONE, 0, True)
    assert controller.pulse_plan(ErrorVec(0.05, 0.0), P, False) == (Cam.RIGHT, 1, False)


def test_pulse_plan_bare_formula_without_min_taps():
    p = ControlParams(min_taps=0)
    assert controller.pulse_plan(ErrorVec(0.05, 0.0), p, False) == (Cam.NONE, 0, False)
    assert controller.pulse_plan(ErrorVec(0.15, 0.0), p, False) == (Cam.RIGHT, 1, False)


def test_pulse_plan_taps_are_capped():
    assert controller.pulse_plan(ErrorVec(-0.5, 0.0), P, False) == (Cam.LEFT, 4, False)


def test_pulse_plan_vertical_axis():
    cam, taps, _ = controller.pulse_plan(ErrorVec(0.0, -0.3), P, False)
    assert cam is Cam.UP
    assert taps == 3


def test_action_validation():
    with pytest.raises(ValueError):
        Action(Cam.LEFT, 0)
    with pytest.raises(ValueError):
        Action(Cam.NONE, 2)
    assert Action(Cam.RIGHT, 2, ForwardDelta.PRESS).to_dict() == {
        "cam": "RIGHT", "taps": 2, "forward": "PRESS"}


def test_params_validation():
    with pytest.raises(ValueError):
        ControlParams(eps_x_in=0.1, eps_x_out=0.08)
    with pytest.raises(ValueError):
        ControlParams(ring_size=5, delta=10)


def test_scan_to_align_on_stable_mstp():
    s = controller.initial_state()
    for _ in range(2):
        s = step(s, CENTERED)
        assert s.fsm is FsmState.SCAN
    s = step(s, CENTERED)
    assert s.fsm is FsmState.ALIGN
    assert not s.forward


def test_scan_never_moves_forward():
    s = controller.initial_state()
    for _ in range(10):
        s = step(s, None)
        assert s.fsm is FsmState.SCAN
        assert not s.forward


def test_forward_gate_opens_after_tau_on():
    s = replace(controller.initial_state(), fsm=FsmState.ALIGN)
    for _ in range(P.tau_on - 1):
        s = step(s, CENTERED)
        assert not s.forward
    s = step(s, CENTERED)
    assert s.fsm is FsmState.ADVANCE
    assert s.forward


def _advancing_state():
    s = replace(controller.initial_state(), fsm=FsmState.ALIGN)
    for _ in range(P.tau_on):
        s = step(s, CENTERED)
    assert s.fsm is FsmState.ADVANCE
    return s


def test_misalignment_closes_gate_same_frame():
    s = step(_advancing_state(), mstp_at(160.0 + 0.2 * 320))
    assert s.fsm is FsmState.ALIGN
    assert not s.forward


def test_advance_refine_advance():
    s = step(_advancing_state(), mstp_at(160.0 + 0.05 * 320))
    assert s.fsm is FsmState.REFINE
    assert s.forward
    s = step(s, CENTERED)
    assert s.fsm is FsmState.ADVANCE


def test_naive_advance_never_refines():
    p = ControlParams(enable_recovery=False)
    s = replace(controller.initial_state(), fsm=FsmState.ALIGN)
    for _ in range(p.tau_on):
        s = step(s, CENTERED, p=p)
    assert s.fsm is FsmState.ADVANCE
    for offset in (0.04, -0.05, 0.07, 0.0):
        s = step(s, mstp_at(160.0 + offset * 320), p=p)
        assert s.fsm is FsmState.ADVANCE
        assert s.forward


def test_latched_align_opens_gate_without_pulses():
    off_center = mstp_at(160.0 + 0.05 * 320)
    s = replace(controller.initial_state(), fsm=FsmState.ALIGN, centered_latch=True,
                prev_box=off_center.box, stable_count=P.stable_frames)
    for _ in range(P.tau_on):
        assert s.fsm is FsmState.ALIGN
        s = step(s, off_center)
        action, s = controller.act(s, off_center, P)
        assert action.cam is Cam.NONE
    assert s.fsm is FsmState.ADVANCE
    assert s.forward


def test_unlatched_align_pulses_into_inner_band():
    off_center = mstp_at(160.0 + 0.05 * 320)
    s = replace(controller.initial_state(), fsm=FsmState.ALIGN)
    s = step(s, off_center)
    action, s = controller.act(s, off_center, P)
    assert (action.cam, action.tap_count) == (Cam.RIGHT, 1)
    assert s.fsm is FsmState.ALIGN
    assert s.aligned_since == 0


def test_latch_cleared_when_scanning():
    s = replace(_advancing_state(), centered_latch=True)
    for _ in range(P.mstp_lost_limit):
        s = step(s, None)
    assert s.fsm is FsmState.SCAN
    assert not s.centered_latch


def test_latch_cleared_when_target_changes():
    s = replace(_advancing_state(), centered_latch=True)
    s = step(s, mstp_at(60.0))
    assert s.stable_count == 1
    assert not s.centered_latch


def test_lost_mstp_returns_to_scan():
    s = _advancing_state()
    for _ in range(P.mstp_lost_limit - 1):
        s = step(s, None)
        assert s.fsm is FsmState.ADVANCE
        assert s.forward
    s = step(s, None)
    assert s.fsm is FsmState.SCAN
    assert not s.forward


def test_stagnation_triggers_recovery():
    p = ControlParams(t_stag=3)
    s = _advancing_state()
    right = mstp_at(160.0 + 0.02 * 320)
    for _ in range(2):
        s = step(s, right, STALLED, p=p)
        assert s.fsm is FsmState.ADVANCE
    s = step(s, right, STALLED, p=p)
    assert s.fsm is FsmState.RECOVER_LOCAL
    assert s.turn_dir is Cam.LEFT
    assert not s.forward


def test_stagnation_ignored_without_recovery():
    p = ControlParams(t_stag=3, enable_recovery=False)
    s = _advancing_state()
    for _ in range(10):
        s = step(s, CENTERED, STALLED, p=p)
    assert s.fsm is FsmState.ADVANCE


def test_progress_signals():
    assert not ProgressSignals(0.0, 0.99, 2.0).stalled(P)
    assert not ProgressSignals(0.05, 0.99, 0.0).stalled(P)
    assert STALLED.stalled(P)


def test_progress_update_on_static_frames():
    frame = vision.Frame.from_array(np.random.default_rng(0).integers(0, 256, size=(36, 64)))
    ring = (frame,) * (P.delta + 1)
    prog = controller.progress_update(ring, (100.0,) * (P.delta + 1), P)
    assert prog.area_delta == 0.0
    assert prog.ssim_recent == pytest.approx(1.0)
    assert prog.flow_mag == 0.0
    assert prog.stalled(P)


def test_progress_update_needs_full_window():
    prog = controller.progress_update((), (), P)
    assert prog is controller.NEUTRAL_PROGRESS
    assert not prog.stalled(P)


def test_recovery_maneuver_then_scan():
    p = ControlParams(t_stag=1)
    s = step(_advancing_state(), CENTERED, STALLED, p=p)
    assert s.fsm is FsmState.RECOVER_LOCAL
    assert s.turn_dir is Cam.LEFT
    cams = []
    for _ in range(p.recover_pause + p.recover_pulses):
        assert s.fsm is FsmState.RECOVER_LOCAL
        action, s = controller.act(s, None, p)
        cams.append(action.cam)
        s = step(s, None, p=p)
    assert cams == [Cam.NONE] * p.recover_pause + [Cam.LEFT] * p.recover_pulses
    assert s.fsm is FsmState.SCAN


def _finish_recovery(mstp, prog, p):
    s = step(_advancing_state(), CENTERED, STALLED, p=p)
    assert s.fsm is FsmState.RECOVER_LOCAL
    for _ in range(p.recover_pause + p.recover_pulses):
        _, s = controller.act(s, mstp, p)
        s = step(s, mstp, prog, p=p)
    return s


def test_recovery_escalates_when_stall_persists():
    p = ControlParams(t_stag=1)
    turned_but_same_view = ProgressSignals(area_delta=0.0, ssim_recent=0.99, flow_mag=4.0)
    s = _finish_recovery(None, turned_but_same_view, p)
    assert s.fsm is FsmState.ESCAPE_STUCK
    assert 18 <= s.turn_taps_left <= 36


def test_recovery_scans_when_view_changed_around_same_target():
    p = ControlParams(t_stag=1)
    changed = ProgressSignals(area_delta=0.0, ssim_recent=0.4, flow_mag=4.0)
    s = _finish_recovery(CENTERED, changed, p)
    assert s.fsm is FsmState.SCAN


def test_recovery_scans_when_target_grew():
    p = ControlParams(t_stag=1)
    closer = ProgressSignals(area_delta=0.2, ssim_recent=0.99, flow_mag=0.0)
    assert _finish_recovery(CENTERED, closer, p).fsm is FsmState.SCAN


def test_recovery_must_fit_progress_window():
    with pytest.raises(ValueError):
        ControlParams(recover_pause=9, recover_pulses=2, delta=10)


def test_full_sweep_escapes_then_bursts():
    s = controller.initial_state(seed=3)
    for _ in range(72):
        s = step(s, None)
        assert s.fsm is FsmState.SCAN
        action, s = controller.act(s, None, P)
        assert (action.cam, action.tap_count) == (Cam.LEFT, 1)
    s = step(s, None)
    assert s.fsm is FsmState.ESCAPE_STUCK
    while s.turn_taps_left:
        action, s = controller.act(s, None, P)
        assert action.cam is s.turn_dir
        s = step(s, None)
    assert s.fsm is FsmState.ADVANCE
    forward_frames = 0
    while s.fsm is FsmState.ADVANCE:
        forward_frames += s.forward
        s = step(s, None)
    assert forward_frames == P.escape_burst
    assert s.fsm is FsmState.SCAN


def test_escape_turn_is_reproducible():
    a = controller.initial_state(seed=11)
    b = controller.initial_state(seed=11)
    assert controller._escape_turn(a, P) == controller._escape_turn(b, P)


def test_third_revisit_enters_loop_breaker():
    s = _advancing_state()
    s = step(s, CENTERED, hits=2)
    assert s.fsm is FsmState.ADVANCE
    s = step(s, CENTERED, hits=3)
    assert s.fsm is FsmState.LOOP_BREAKER
    assert s.target_sector == 1
    assert not s.forward


def test_loop_breaker_turns_to_target_then_scans():
    costs = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.5]
    s = controller.fsm_step(controller.initial_state(), None, controller.NEUTRAL_PROGRESS, 3, P, costs)
    assert s.target_sector == 7
    assert s.turn_dir is Cam.RIGHT
    while s.turn_taps_left:
        action, s = controller.act(s, None, P)
        assert action.cam is Cam.RIGHT
        s = step(s, None)
    assert s.fsm is FsmState.SCAN


def test_choose_loop_sector():
    assert controller.choose_loop_sector([0.0] * 8) == 1
    assert controller.choose_loop_sector([0.5, 0.5, 0.0, 0.0, 0.5, 0.5, 0.5, 0.5]) == 3


def test_act_forward_toggle():
    s = _advancing_state()
    action, s = controller.act(s, CENTERED, P)
    assert action.forward_delta is ForwardDelta.PRESS
    s = step(s, CENTERED)
    action, s = controller.act(s, CENTERED, P)
    assert action.forward_delta is ForwardDelta.HOLD
    s = step(s, mstp_at(300.0))
    action, s = controller.act(s, mstp_at(300.0), P)
    assert action.forward_delta is ForwardDelta.RELEASE
    assert action.cam is Cam.RIGHT


def test_fsm_step_is_pure():
    s = _advancing_state()
    assert step(s, CENTERED, STALLED) == step(s, CENTERED, STALLED)


def test_dwell_counts_every_step():
    s = controller.initial_state()
    for _ in range(4):
        s = step(s, None)
    assert s.frames == 4
    assert s.dwell()["SCAN"] == 4


def test_loop_anchors_count_spaced_revisits():
    anchors = controller.LoopAnchors(max_hamming=6, period=15, min_gap=30)
    h = 0x0F0F0F0F0F0F0F0F
    assert anchors.observe(h, 0) == 0
    assert anchors.observe(h ^ 0b111, 10) == 0
    assert anchors.observe(h, 45) == 1
    assert anchors.observe(h, 80) == 2
    assert anchors.observe(h, 81) == 2
    assert anchors.observe(h, 120) == 3
    anchors.reset(h)
    assert anchors.observe(h, 160) == 1


def test_loop_anchors_only_lay_on_period():
    anchors = controller.LoopAnchors(period=15)
    anchors.observe(1, 7)
    assert anchors.anchors == []
    anchors.observe(1, 15)
    assert len(anchors.anchors) == 1
