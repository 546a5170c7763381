"""
Test-world geometry and its line-oriented text format.

A world is a set of axis-aligned rooms whose edges become walls except where a
portal opens them. Props are solid obstacles, decoys are bright wall patches
that can be seen but not walked through.

File grammar (one record per line, '#' starts a comment, sections in order):

    [world]
    name = <scenario>          seed = <int>
    wall_height = <m>          floor_shade = <0-255>     ceiling_shade = <0-255>
    [textures]   <id> stripes|checker <base> <contrast> <period>
    [rooms]      <id> <x0> <y0> <x1> <y1> <texture> [<floor shade> <ceiling shade>]
    [portals]    <id> <x0> <y0> <x1> <y1> <texture> <tag,tag|->
    [props]      <id> box <cx> <cy> <half_x> <half_y> <height> <texture>
                 <id> cylinder <cx> <cy> <radius> <height> <texture>
    [decoys]     <id> <x0> <y0> <x1> <y1> <z0> <z1> <intensity> <salience>
    [spawn]      <x> <y> <yaw> <pitch>
    [route]      <portal id> ...
    [milestones] <id> <x> <y> <yaw> <pitch>
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import FrozenSet, Optional, Tuple

import numpy as np
import parse


EYE_HEIGHT = 1.1
PORTAL_HEIGHT = 2.2
PORTAL_TAGS = frozenset(["dark", "narrow", "decoy_adjacent"])
SECTIONS = ["world", "textures", "rooms", "portals", "props", "decoys", "spawn", "route", "milestones"]


class WorldFormatError(Exception):
    pass


@dataclass(frozen=True)
class AvatarPose:
    x: float
    y: float
    yaw: float = 0.0
    pitch: float = 0.0
    forward_held: bool = False

    def __post_init__(self):
        object.__setattr__(self, "yaw", float(self.yaw) % 360.0)
        if not -45.0 <= self.pitch <= 45.0:
            raise ValueError(f"pitch {self.pitch} outside [-45, 45]")

    def to_list(self):
        return [self.x, self.y, self.yaw, self.pitch]

    @classmethod
    def from_list(cls, values):
        x, y, yaw, pitch = values
        return cls(float(x), float(y), float(yaw), float(pitch))


@dataclass(frozen=True)
class Texture:
    id: str
    kind: str
    base: float
    contrast: float
    period: float

    def __post_init__(self):
        if self.kind not in ("stripes", "checker"):
            raise WorldFormatError(f"unknown texture kind {self.kind!r}")
        if self.period <= 0:
            raise WorldFormatError(f"texture {self.id}: period must be positive")


@dataclass(frozen=True)
class Room:
    id: str
    x0: float
    y0: float
    x1: float
    y1: float
    texture: str
    floor_shade: Optional[int] = None
    ceiling_shade: Optional[int] = None

    def __post_init__(self):
        shades = (self.floor_shade, self.ceiling_shade)
        if (shades[0] is None) != (shades[1] is None):
            raise WorldFormatError(f"room {self.id}: give both floor and ceiling shades or neither")
        if shades[0] is not None and not all(0 <= v <= 255 for v in shades):
            raise WorldFormatError(f"room {self.id}: shades must lie in [0, 255]")

    def contains(self, x, y) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def edges(self):
        return [
            (self.x0, self.y0, self.x1, self.y0),
            (self.x1, self.y0, self.x1, self.y1),
            (self.x0, self.y1, self.x1, self.y1),
            (self.x0, self.y0, self.x0, self.y1),
        ]


@dataclass(frozen=True)
class Portal:
    id: str
    x0: float
    y0: float
    x1: float
    y1: float
    texture: str
    tags: FrozenSet[str] = frozenset()

    @property
    def width(self) -> float:
        return float(np.hypot(self.x1 - self.x0, self.y1 - self.y0))

    @property
    def midpoint(self):
        return ((self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2)


@dataclass(frozen=True)
class Prop:
    id: str
    kind: str
    cx: float
    cy: float
    size: Tuple[float, ...]
    height: float
    texture: str

    def segments(self):
        hx, hy = self.size
        x0, x1, y0, y1 = self.cx - hx, self.cx + hx, self.cy - hy, self.cy + hy
        return [(x0, y0, x1, y0), (x1, y0, x1, y1), (x0, y1, x1, y1), (x0, y0, x0, y1)]

    def contains(self, x, y, margin=0.0) -> bool:
        if self.kind == "cylinder":
            return np.hypot(x - self.cx, y - self.cy) < self.size[0] + margin
        hx, hy = self.size
        dx = max(abs(x - self.cx) - hx, 0.0)
        dy = max(abs(y - self.cy) - hy, 0.0)
        if margin == 0.0:
            return abs(x - self.cx) < hx and abs(y - self.cy) < hy
        return np.hypot(dx, dy) < margin


@dataclass(frozen=True)
class Decoy:
    id: str
    x0: float
    y0: float
    x1: float
    y1: float
    z0: float
    z1: float
    intensity: float
    salience: float = 1.0


@dataclass(frozen=True)
class World:
    name: str
    seed: int
    textures: Tuple[Texture, ...]
    rooms: Tuple[Room, ...]
    portals: Tuple[Portal, ...]
    spawn: AvatarPose
    route: Tuple[str, ...]
    milestones: Tuple[Tuple[str, AvatarPose], ...]
    props: Tuple[Prop, ...] = ()
    decoys: Tuple[Decoy, ...] = ()
    wall_height: float = 3.0
    floor_shade: int = 60
    ceiling_shade: int = 190
    texture_index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        index = {t.id: t for t in self.textures}
        for item in self.rooms + self.portals + self.props:
            if item.texture not in index:
                raise WorldFormatError(f"{item.id}: unknown texture {item.texture!r}")
        portal_ids = {p.id for p in self.portals}
        for portal_id in self.route:
            if portal_id not in portal_ids:
                raise WorldFormatError(f"route names unknown portal {portal_id!r}")
        object.__setattr__(self, "texture_index", index)

    def texture(self, texture_id) -> Texture:
        return self.texture_index[texture_id]

    def portal(self, portal_id) -> Portal:
        for p in self.portals:
            if p.id == portal_id:
                return p
        raise KeyError(portal_id)

    @cached_property
    def walls(self):
        """Room edges minus portal openings, as (segments, texture ids)."""
        segments = []
        textures = []
        for room in self.rooms:
            for edge in room.edges():
                for piece in _subtract_openings(edge, self.portals):
                    segments.append(piece)
                    textures.append(room.texture)
        return np.array(segments, dtype=np.float64).reshape(-1, 4), tuple(textures)

    def in_room(self, x, y) -> bool:
        return any(room.contains(x, y) for room in self.rooms)

    def walkable(self, x, y) -> bool:
        return self.in_room(x, y) and not any(prop.contains(x, y) for prop in self.props)


def _subtract_openings(edge, portals):
    x0, y0, x1, y1 = edge
    horizontal = y0 == y1
    lo, hi = (x0, x1) if horizontal else (y0, y1)
    cuts = []
    for p in portals:
        if horizontal and p.y0 == p.y1 == y0:
            a, b = sorted((p.x0, p.x1))
        elif not horizontal and p.x0 == p.x1 == x0:
            a, b = sorted((p.y0, p.y1))
        else:
            continue
        a, b = max(a, lo), min(b, hi)
        if a < b:
            cuts.append((a, b))
    pieces = []
    start = lo
    for a, b in sorted(cuts):
        if a > start:
            pieces.append((start, a))
        start = max(start, b)
    if start < hi:
        pieces.append((start, hi))
    if horizontal:
        return [(a, y0, b, y0) for a, b in pieces]
    return [(x0, a, x0, b) for a, b in pieces]


def _num(value) -> str:
    return repr(float(value))


def format_world(world: World) -> str:
    lines = [
        "[world]",
        f"name = {world.name}",
        f"seed = {world.seed}",
        f"wall_height = {_num(world.wall_height)}",
        f"floor_shade = {world.floor_shade}",
        f"ceiling_shade = {world.ceiling_shade}",
        "[textures]",
    ]
    for t in world.textures:
        lines.append(f"{t.id} {t.kind} {_num(t.base)} {_num(t.contrast)} {_num(t.period)}")
    lines.append("[rooms]")
    for r in world.rooms:
        shades = "" if r.floor_shade is None else f" {r.floor_shade} {r.ceiling_shade}"
        lines.append(f"{r.id} {_num(r.x0)} {_num(r.y0)} {_num(r.x1)} {_num(r.y1)} {r.texture}{shades}")
    lines.append("[portals]")
    for p in world.portals:
        tags = ",".join(sorted(p.tags)) or "-"
        lines.append(f"{p.id} {_num(p.x0)} {_num(p.y0)} {_num(p.x1)} {_num(p.y1)} {p.texture} {tags}")
    lines.append("[props]")
    for p in world.props:
        size = " ".join(_num(v) for v in p.size)
        lines.append(f"{p.id} {p.kind} {_num(p.cx)} {_num(p.cy)} {size} {_num(p.height)} {p.texture}")
    lines.append("[decoys]")
    for d in world.decoys:
        values = " ".join(_num(v) for v in (d.x0, d.y0, d.x1, d.y1, d.z0, d.z1, d.intensity, d.salience))
        lines.append(f"{d.id} {values}")
    lines.append("[spawn]")
    lines.append(" ".join(_num(v) for v in world.spawn.to_list()))
    lines.append("[route]")
    lines.append(" ".join(world.route))
    lines.append("[milestones]")
    for milestone_id, pose in world.milestones:
        lines.append(f"{milestone_id} " + " ".join(_num(v) for v in pose.to_list()))
    return "\n".join(lines) + "\n"


def write_world(world: World, path):
    Path(path).write_text(format_world(world))


PATTERNS = {
    "world": "{key} = {value}",
    "textures": "{id} {kind} {base:g} {contrast:g} {period:g}",
    "shaded_rooms": "{id} {x0:g} {y0:g} {x1:g} {y1:g} {texture} {floor:d} {ceiling:d}",
    "rooms": "{id} {x0:g} {y0:g} {x1:g} {y1:g} {texture}",
    "portals": "{id} {x0:g} {y0:g} {x1:g} {y1:g} {texture} {tags}",
    "box": "{id} box {cx:g} {cy:g} {hx:g} {hy:g} {height:g} {texture}",
    "cylinder": "{id} cylinder {cx:g} {cy:g} {radius:g} {height:g} {texture}",
    "decoys": "{id} {x0:g} {y0:g} {x1:g} {y1:g} {z0:g} {z1:g} {intensity:g} {salience:g}",
    "pose": "{x:g} {y:g} {yaw:g} {pitch:g}",
    "milestones": "{id} {x:g} {y:g} {yaw:g} {pitch:g}",
}


def _match(pattern, line, lineno):
    result = parse.parse(PATTERNS[pattern], line)
    if result is None:
        raise WorldFormatError(f"line {lineno}: cannot parse {line!r} as {pattern}")
    return result


def parse_world(text: str) -> World:
    header = {}
    items = {section: [] for section in SECTIONS}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in items:
                raise WorldFormatError(f"line {lineno}: unknown section {section!r}")
            continue
        if section is None:
            raise WorldFormatError(f"line {lineno}: record outside of a section")
        if section == "world":
            result = _match("world", line, lineno)
            header[result["key"]] = result["value"]
        elif section == "textures":
            r = _match("textures", line, lineno)
            items[section].append(Texture(r["id"], r["kind"], r["base"], r["contrast"], r["period"]))
        elif section == "rooms":
            r = parse.parse(PATTERNS["shaded_rooms"], line)
            if r is None:
                r = _match("rooms", line, lineno)
                shades = (None, None)
            else:
                shades = (r["floor"], r["ceiling"])
            items[section].append(Room(r["id"], r["x0"], r["y0"], r["x1"], r["y1"], r["texture"], *shades))
        elif section == "portals":
            r = _match("portals", line, lineno)
            tags = frozenset() if r["tags"] == "-" else frozenset(r["tags"].split(","))
            if not tags <= PORTAL_TAGS:
                raise WorldFormatError(f"line {lineno}: unknown portal tags {sorted(tags - PORTAL_TAGS)}")
            items[section].append(Portal(r["id"], r["x0"], r["y0"], r["x1"], r["y1"], r["texture"], tags))
        elif section == "props":
            kind = line.split()[1] if len(line.split()) > 1 else ""
            if kind not in ("box", "cylinder"):
                raise WorldFormatError(f"line {lineno}: unknown prop kind {kind!r}")
            r = _match(kind, line, lineno)
            size = (r["hx"], r["hy"]) if kind == "box" else (r["radius"],)
            items[section].append(Prop(r["id"], kind, r["cx"], r["cy"], size, r["height"], r["texture"]))
        elif section == "decoys":
            r = _match("decoys", line, lineno)
            items[section].append(Decoy(r["id"], r["x0"], r["y0"], r["x1"], r["y1"],
                                        r["z0"], r["z1"], r["intensity"], r["salience"]))
        elif section == "spawn":
            r = _match("pose", line, lineno)
            items[section].append(AvatarPose(r["x"], r["y"], r["yaw"], r["pitch"]))
        elif section == "route":
            items[section].extend(line.split())
        elif section == "milestones":
            r = _match("milestones", line, lineno)
            items[section].append((r["id"], AvatarPose(r["x"], r["y"], r["yaw"], r["pitch"])))

    if len(items["spawn"]) != 1:
        raise WorldFormatError("exactly one spawn pose is required")
    try:
        return World(
            name=header["name"],
            seed=int(header["seed"]),
            textures=tuple(items["textures"]),
            rooms=tuple(items["rooms"]),
            portals=tuple(items["portals"]),
            props=tuple(items["props"]),
            decoys=tuple(items["decoys"]),
            spawn=items["spawn"][0],
            route=tuple(items["route"]),
            milestones=tuple(items["milestones"]),
            wall_height=float(header.get("wall_height", 3.0)),
            floor_shade=int(header.get("floor_shade", 60)),
            ceiling_shade=int(header.get("ceiling_shade", 190)),
        )
    except KeyError as err:
        raise WorldFormatError(f"missing [world] field {err}") from None
    except ValueError as err:
        raise WorldFormatError(str(err)) from None


def read_world(path) -> World:
    return parse_world(Path(path).read_text())
