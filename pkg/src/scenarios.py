"""
Named world templates. The geometry of every scenario is fixed; the seed only
varies surface textures.
"""

from __future__ import annotations

import numpy as np

from world import AvatarPose, Decoy, Portal, Prop, Room, Texture, World


class UnknownScenario(Exception):
    pass


# (floor, ceiling) shades, cycled over the rooms of a scenario. No two
# entries order floor, wall and ceiling brightness the same way.
PALETTES = [(50, 200), (200, 50), (200, 200), (30, 30)]


class WorldBuilder:
    def __init__(self, name, seed):
        self.name = name
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.textures = []
        self.rooms = []
        self.portals = []
        self.props = []
        self.decoys = []
        self.milestones = []

    def texture(self, brightness=0.0):
        kind = "checker" if self.rng.random() < 0.4 else "stripes"
        base = float(np.round(self.rng.uniform(90, 160) + brightness, 1))
        contrast = float(np.round(self.rng.uniform(25, 55), 1))
        period = float(self.rng.choice([0.4, 0.5, 0.7, 1.0]))
        texture = Texture(f"t{len(self.textures)}", kind, min(base, 255.0 - contrast), contrast, period)
        self.textures.append(texture)
        return texture.id

    def room(self, x0, y0, x1, y1, brightness=0.0, palette=None):
        room_id = f"r{len(self.rooms)}"
        if palette is None:
            palette = len(self.rooms) % len(PALETTES)
        floor, ceiling = PALETTES[palette]
        self.rooms.append(Room(room_id, x0, y0, x1, y1, self.texture(brightness), floor, ceiling))
        return room_id

    def portal(self, x0, y0, x1, y1, *tags):
        portal_id = f"p{len(self.portals)}"
        self.portals.append(Portal(portal_id, x0, y0, x1, y1, self.texture(), frozenset(tags)))
        return portal_id

    def box(self, cx, cy, hx, hy, height=2.4):
        self.props.append(Prop(f"b{len(self.props)}", "box", cx, cy, (hx, hy), height, self.texture(-30)))

    def cylinder(self, cx, cy, radius, height=2.4):
        self.props.append(Prop(f"c{len(self.props)}", "cylinder", cx, cy, (radius,), height, self.texture(-30)))

    def decoy(self, x0, y0, x1, y1, z0, z1, intensity=245.0, salience=1.3):
        self.decoys.append(Decoy(f"d{len(self.decoys)}", x0, y0, x1, y1, z0, z1, intensity, salience))

    def milestone(self, x, y, yaw):
        self.milestones.append((f"m{len(self.milestones) + 1}", AvatarPose(x, y, yaw)))

    def build(self, spawn, route) -> World:
        return World(
            name=self.name,
            seed=self.seed,
            textures=tuple(self.textures),
            rooms=tuple(self.rooms),
            portals=tuple(self.portals),
            props=tuple(self.props),
            decoys=tuple(self.decoys),
            spawn=spawn,
            route=tuple(route),
            milestones=tuple(self.milestones),
        )


def build_straight_corridor(b: WorldBuilder):
    route = []
    for i in range(4):
        b.room(8.0 * i, 0.0, 8.0 * (i + 1), 4.0)
    for x in (8.0, 16.0, 24.0):
        route.append(b.portal(x, 1.0, x, 3.0))
    for x in (10.0, 18.0, 26.0):
        b.milestone(x, 2.0, 0.0)
    return AvatarPose(2.0, 2.0, 0.0), route


def build_l_turn(b: WorldBuilder):
    b.room(0.0, 0.0, 8.0, 4.0)
    b.room(8.0, 0.0, 12.0, 4.0)
    b.room(8.0, 4.0, 12.0, 12.0)
    route = [b.portal(8.0, 1.0, 8.0, 3.0), b.portal(9.0, 4.0, 11.0, 4.0)]
    b.milestone(10.0, 2.0, 90.0)
    b.milestone(10.0, 8.0, 90.0)
    return AvatarPose(2.0, 2.0, 0.0), route


def build_t_junction_deadend(b: WorldBuilder):
    b.room(0.0, 0.0, 10.0, 4.0)
    b.room(10.0, 0.0, 14.0, 4.0)
    b.room(10.0, -8.0, 14.0, 0.0, brightness=40.0, palette=0)
    b.room(10.0, 4.0, 14.0, 12.0, palette=2)
    b.room(10.0, 12.0, 14.0, 20.0, palette=3)
    entry = b.portal(10.0, 1.0, 10.0, 3.0)
    b.portal(11.0, 0.0, 13.0, 0.0)
    right = b.portal(11.0, 4.0, 13.0, 4.0)
    onward = b.portal(11.0, 12.0, 13.0, 12.0)
    b.milestone(12.0, 2.0, 90.0)
    b.milestone(12.0, 7.0, 90.0)
    b.milestone(12.0, 15.0, 90.0)
    return AvatarPose(2.0, 2.0, 0.0), [entry, right, onward]


def build_symmetric_fork(b: WorldBuilder):
    b.room(0.0, -4.0, 8.0, 4.0)
    b.room(8.0, -6.0, 14.0, -0.5)
    b.room(8.0, 0.5, 14.0, 6.0)
    b.room(14.0, -5.0, 22.0, -1.0)
    left = b.portal(8.0, -3.0, 8.0, -1.0)
    b.portal(8.0, 1.0, 8.0, 3.0)
    onward = b.portal(14.0, -4.0, 14.0, -2.0)
    b.milestone(10.0, -3.0, 0.0)
    b.milestone(17.0, -3.0, 0.0)
    return AvatarPose(2.0, 0.0, 0.0), [left, onward]


def build_dark_right_door(b: WorldBuilder):
    b.room(0.0, -4.0, 8.0, 4.0)
    b.room(8.0, -6.5, 16.0, 1.5)
    b.room(8.0, 1.5, 12.0, 5.5)
    b.room(16.0, -9.0, 20.0, -3.5, brightness=50.0, palette=2)
    b.room(16.0, -2.0, 24.0, 4.0, palette=3)
    first = b.portal(8.0, -3.5, 8.0, -1.5)
    b.portal(8.0, 2.0, 8.0, 4.0)
    b.portal(16.0, -6.0, 16.0, -4.0)
    second = b.portal(16.0, -1.0, 16.0, 1.0, "dark")
    b.milestone(10.0, -2.5, 0.0)
    b.milestone(18.0, 0.0, 0.0)
    return AvatarPose(2.0, 0.0, 0.0), [first, second]


def build_decoy_salience(b: WorldBuilder):
    b.room(0.0, -4.0, 10.0, 4.0)
    b.room(10.0, 0.0, 18.0, 4.0)
    b.room(18.0, 0.0, 26.0, 4.0)
    first = b.portal(10.0, 1.0, 10.0, 3.0, "decoy_adjacent")
    second = b.portal(18.0, 1.0, 18.0, 3.0)
    b.decoy(9.98, -3.0, 9.98, -1.0, 0.3, 2.0)
    b.milestone(12.0, 2.0, 0.0)
    b.milestone(20.0, 2.0, 0.0)
    return AvatarPose(2.0, 0.0, 0.0), [first, second]


def build_narrow_oblique_stairs(b: WorldBuilder):
    b.room(0.0, -4.0, 8.0, 4.0)
    b.room(6.0, 4.0, 8.0, 10.0)
    b.room(4.0, 10.0, 12.0, 16.0)
    first = b.portal(6.5, 4.0, 7.5, 4.0, "narrow")
    second = b.portal(6.5, 10.0, 7.5, 10.0, "narrow")
    b.milestone(7.0, 6.0, 90.0)
    b.milestone(7.0, 13.0, 90.0)
    return AvatarPose(2.0, -2.0, 30.0), [first, second]


def build_occluded_gap(b: WorldBuilder):
    b.room(0.0, 0.0, 10.0, 6.0)
    b.room(10.0, 1.0, 18.0, 5.0)
    b.room(18.0, 1.0, 26.0, 5.0)
    first = b.portal(10.0, 2.0, 10.0, 4.0)
    second = b.portal(18.0, 2.0, 18.0, 4.0)
    b.box(8.0, 2.4, 0.4, 0.4)
    b.cylinder(14.0, 4.3, 0.4)
    b.milestone(12.0, 3.0, 0.0)
    b.milestone(20.0, 3.0, 0.0)
    return AvatarPose(2.0, 3.0, 0.0), [first, second]


class Scenario:
    def __init__(self, name, build, description):
        self.name = name
        self.description = description
        self._build = build

    def generate(self, seed) -> World:
        builder = WorldBuilder(self.name, seed)
        spawn, route = self._build(builder)
        return builder.build(spawn, route)


SCENARIOS = [
    Scenario("straight_corridor", build_straight_corridor,
             "four rooms in a row joined by centered doors"),
    Scenario("l_turn", build_l_turn,
             "corridor that turns right into a second corridor"),
    Scenario("t_junction_deadend", build_t_junction_deadend,
             "junction with a bright dead end on the left and the route on the right"),
    Scenario("symmetric_fork", build_symmetric_fork,
             "two doors mirrored about the spawn axis, only the left one continues"),
    Scenario("dark_right_door", build_dark_right_door,
             "two forks where the route takes a left door, then a dark right door"),
    Scenario("decoy_salience", build_decoy_salience,
             "bright wall patch beside the real door"),
    Scenario("narrow_oblique_stairs", build_narrow_oblique_stairs,
             "narrow offset doors approached at an angle"),
    Scenario("occluded_gap", build_occluded_gap,
             "door partly hidden behind a solid table, with a pillar further on"),
]


def get_scenarios():
    return {scenario.name: scenario for scenario in SCENARIOS}


def generate_world(name, seed) -> World:
    scenarios = get_scenarios()
    if name not in scenarios:
        raise UnknownScenario(
            f"unknown scenario {name!r}, choose from {', '.join(sorted(scenarios))}")
    return scenarios[name].generate(seed)
