from dataclasses import replace
import math

import numpy as np
import pytest

from controller import Action, Cam, ForwardDelta
import scenarios
import sim
from sim import InvalidPose, SimParams, Simulator
from world import AvatarPose


PARAMS = SimParams()


@pytest.fixture(scope="module")
def corridor():
    return scenarios.generate_world("straight_corridor", 0)


def test_render_is_deterministic(corridor):
    a = sim.render(corridor, corridor.spawn, PARAMS)
    b = sim.render(corridor, corridor.spawn, PARAMS)
    assert (a.width, a.height) == PARAMS.screen
    assert a.same_pixels(b)


def test_render_changes_with_yaw(corridor):
    a = sim.render(corridor, corridor.spawn, PARAMS)
    b = sim.render(corridor, replace(corridor.spawn, yaw=90.0), PARAMS)
    assert not a.same_pixels(b)


def test_door_ahead_is_centered(corridor):
    visible = {p.portal_id: p for p in sim.visible_portals(corridor, corridor.spawn, PARAMS)}
    door = visible["p0"]
    assert door.occlusion == 0.0
    assert door.box.cx == pytest.approx(160.0, abs=0.5)
    assert door.box.x1 == pytest.approx(160 - 160 / 6, abs=0.5)
    assert door.box.y2 == pytest.approx(90 + 160 * 1.1 / 6, abs=0.5)
    assert door.box.area > max(p.box.area for pid, p in visible.items() if pid != "p0")


def test_no_doors_behind(corridor):
    assert sim.visible_portals(corridor, replace(corridor.spawn, yaw=180.0), PARAMS) == []


def test_occluding_prop_hides_part_of_door():
    w = scenarios.generate_world("occluded_gap", 0)
    visible = {p.portal_id: p for p in sim.visible_portals(w, w.spawn, PARAMS)}
    assert 0.0 < visible["p0"].occlusion < 1.0


def test_dark_door_is_darker():
    w = scenarios.generate_world("dark_right_door", 0)
    plain = replace(w, portals=tuple(replace(p, tags=frozenset()) for p in w.portals))
    pose = AvatarPose(12.0, 0.0, 0.0)
    dark_frame = sim.render(w, pose, PARAMS)
    plain_frame = sim.render(plain, pose, PARAMS)
    assert dark_frame.pixels[60:120, 150:170].mean() < plain_frame.pixels[60:120, 150:170].mean()


def test_taps_rotate_yaw(corridor):
    pose = sim.apply_action(corridor, corridor.spawn, Action(Cam.RIGHT, 2), PARAMS)
    assert pose.yaw == pytest.approx(10.0)
    pose = sim.apply_action(corridor, corridor.spawn, Action(Cam.LEFT, 4), PARAMS)
    assert pose.yaw == pytest.approx(340.0)
    assert (pose.x, pose.y) == (corridor.spawn.x, corridor.spawn.y)


def test_pitch_is_clamped(corridor):
    pose = corridor.spawn
    for _ in range(5):
        pose = sim.apply_action(corridor, pose, Action(Cam.UP, 4), PARAMS)
    assert pose.pitch == 45.0


def test_forward_hold_moves_until_release(corridor):
    pose = sim.apply_action(corridor, corridor.spawn, Action(forward_delta=ForwardDelta.PRESS), PARAMS)
    assert pose.forward_held
    assert pose.x == pytest.approx(2.0 + 3 * PARAMS.speed)
    pose = sim.apply_action(corridor, pose, Action(), PARAMS)
    assert pose.x == pytest.approx(2.0 + 6 * PARAMS.speed)
    released = sim.apply_action(corridor, pose, Action(forward_delta=ForwardDelta.RELEASE), PARAMS)
    assert (released.x, released.y) == (pose.x, pose.y)


def test_walls_stop_the_avatar(corridor):
    pose = sim.teleport(corridor, AvatarPose(6.0, 0.5, 0.0), PARAMS)
    pose = sim.apply_action(corridor, pose, Action(forward_delta=ForwardDelta.PRESS), PARAMS)
    for _ in range(40):
        pose = sim.apply_action(corridor, pose, Action(), PARAMS)
        assert sim.clearance(corridor, pose.x, pose.y) >= PARAMS.avatar_radius - 1e-6
    assert pose.x < 8.0


def test_avatar_passes_through_door(corridor):
    pose = sim.apply_action(corridor, corridor.spawn, Action(forward_delta=ForwardDelta.PRESS), PARAMS)
    for _ in range(30):
        pose = sim.apply_action(corridor, pose, Action(), PARAMS)
    assert pose.x > 8.0


def test_teleport_rejects_invalid_poses(corridor):
    with pytest.raises(InvalidPose):
        sim.teleport(corridor, AvatarPose(-3.0, 2.0), PARAMS)
    with pytest.raises(InvalidPose):
        sim.teleport(corridor, AvatarPose(2.0, 0.1), PARAMS)


def test_teleport_releases_forward(corridor):
    pose = sim.teleport(corridor, AvatarPose(3.0, 2.0, 0.0, 0.0, True), PARAMS)
    assert not pose.forward_held


def test_release_forward_keeps_pose(corridor):
    simulator = Simulator(corridor)
    simulator.step(Action(forward_delta=ForwardDelta.PRESS))
    moved = simulator.pose
    assert moved.forward_held
    released = simulator.release_forward()
    assert not released.forward_held
    assert (released.x, released.y, released.yaw) == (moved.x, moved.y, moved.yaw)


def test_floor_and_ceiling_take_room_shades(corridor):
    first, second = corridor.rooms[:2]
    frame = sim.render(corridor, corridor.spawn, PARAMS)
    assert frame.pixels[179, 160] == first.floor_shade
    assert frame.pixels[0, 160] == first.ceiling_shade
    through_door = sim.render(corridor, AvatarPose(6.5, 2.0, 0.0), PARAMS)
    assert through_door.pixels[179, 160] == second.floor_shade
    assert first.floor_shade != second.floor_shade


def test_unshaded_rooms_use_world_shades(corridor):
    plain = replace(corridor, rooms=tuple(replace(r, floor_shade=None, ceiling_shade=None)
                                          for r in corridor.rooms))
    frame = sim.render(plain, corridor.spawn, PARAMS)
    assert frame.pixels[179, 160] == plain.floor_shade
    assert frame.pixels[0, 160] == plain.ceiling_shade


def test_simulator_ticks(corridor):
    simulator = Simulator(corridor)
    simulator.step(Action(Cam.LEFT, 1))
    simulator.step(Action())
    assert simulator.tick == 2 * PARAMS.ticks_per_decision
    assert simulator.render().t == simulator.tick


def test_params_validation():
    with pytest.raises(ValueError):
        SimParams(fov=180.0)
    with pytest.raises(ValueError):
        SimParams(speed=0.0)


def test_diagonal_walk_slides_along_wall(corridor):
    pose = sim.teleport(corridor, AvatarPose(2.0, 3.0, 45.0), PARAMS)
    pose = sim.apply_action(corridor, pose, Action(forward_delta=ForwardDelta.PRESS), PARAMS)
    for _ in range(9):
        pose = sim.apply_action(corridor, pose, Action(), PARAMS)
    step = PARAMS.speed * math.cos(math.radians(45.0))
    ticks = 10 * PARAMS.ticks_per_decision
    wall_limit = 4.0 - PARAMS.avatar_radius
    assert pose.x == pytest.approx(2.0 + ticks * step, abs=1e-9)
    assert wall_limit - step - 1e-9 <= pose.y <= wall_limit + 1e-9


@pytest.mark.parametrize("name", ["l_turn", "occluded_gap", "narrow_oblique_stairs"])
def test_random_walks_never_enter_geometry(name):
    w = scenarios.generate_world(name, 0)
    rng = np.random.default_rng(8)
    cams = list(Cam)
    deltas = list(ForwardDelta)
    walks = 0
    while walks < 40:
        room = w.rooms[int(rng.integers(len(w.rooms)))]
        start = AvatarPose(rng.uniform(room.x0, room.x1), rng.uniform(room.y0, room.y1),
                           rng.uniform(0.0, 360.0))
        try:
            pose = sim.teleport(w, start, PARAMS)
        except InvalidPose:
            continue
        walks += 1
        for _ in range(30):
            cam = cams[int(rng.integers(len(cams)))]
            taps = 0 if cam is Cam.NONE else int(rng.integers(1, 5))
            action = Action(cam, taps, deltas[int(rng.integers(len(deltas)))])
            pose = sim.apply_action(w, pose, action, PARAMS)
            assert sim.clearance(w, pose.x, pose.y) >= PARAMS.avatar_radius - 1e-6
            assert w.walkable(pose.x, pose.y)
