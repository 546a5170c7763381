"""
Deterministic first-person simulator: avatar kinematics under the discrete
action space, a column raycaster producing grayscale frames and the
ground-truth portal projections consumed by the simulated detector.

Screen right corresponds to increasing yaw.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
import math
from typing import List, Optional

import numpy as np

from controller import Action, Cam, ForwardDelta
import perception
import vision
from world import AvatarPose, EYE_HEIGHT, PORTAL_HEIGHT, World


EPS = 1e-9
MAX_SLIDE_ITERATIONS = 3


class InvalidPose(Exception):
    pass


@dataclass(frozen=True)
class SimParams:
    yaw_per_tap: float = 5.0
    pitch_per_tap: float = 3.0
    speed: float = 0.12
    avatar_radius: float = 0.3
    fov: float = 90.0
    width: int = 320
    height: int = 180
    ticks_per_decision: int = 3
    t_pulse: int = 1
    t_gap: int = 2
    falloff: float = 0.15
    dark_factor: float = 0.35
    near: float = 0.05
    occlusion_samples: int = 32
    free_space_depth: float = 1.0

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.fov >= 180:
            raise ValueError("fov must be below 180 degrees")

    @property
    def focal(self) -> float:
        return (self.width / 2) / math.tan(math.radians(self.fov / 2))

    @property
    def screen(self):
        return (self.width, self.height)


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def ray_segments(origin, dirs: np.ndarray, segments: np.ndarray):
    """Intersect rays origin + t*dir with segments.

    Returns (t, s) arrays of shape (rays, segments); misses have t = inf.
    """
    ox, oy = origin
    if len(segments) == 0:
        shape = (len(dirs), 0)
        return np.full(shape, np.inf), np.zeros(shape)
    dx = dirs[:, 0, None]
    dy = dirs[:, 1, None]
    px = segments[None, :, 0] - ox
    py = segments[None, :, 1] - oy
    ex = segments[None, :, 2] - segments[None, :, 0]
    ey = segments[None, :, 3] - segments[None, :, 1]
    denom = _cross(dx, dy, ex, ey)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross(px, py, ex, ey) / denom
        s = _cross(px, py, dx, dy) / denom
    hit = (np.abs(denom) > EPS) & (t > EPS) & (s >= 0) & (s <= 1)
    return np.where(hit, t, np.inf), np.where(hit, s, 0.0)


def ray_circle(origin, dirs: np.ndarray, center, radius):
    """Nearest positive ray parameter hitting the circle, inf on a miss."""
    fx = origin[0] - center[0]
    fy = origin[1] - center[1]
    a = dirs[:, 0] ** 2 + dirs[:, 1] ** 2
    b = 2 * (fx * dirs[:, 0] + fy * dirs[:, 1])
    c = fx * fx + fy * fy - radius * radius
    disc = b * b - 4 * a * c
    root = np.sqrt(np.maximum(disc, 0.0))
    t1 = (-b - root) / (2 * a)
    t2 = (-b + root) / (2 * a)
    t = np.where(t1 > EPS, t1, np.where(t2 > EPS, t2, np.inf))
    return np.where(disc >= 0, t, np.inf)


def _texture_arrays(world: World, texture_ids):
    textures = [world.texture(t) for t in texture_ids]
    return (np.array([t.kind == "checker" for t in textures], dtype=bool),
            np.array([t.base for t in textures]),
            np.array([t.contrast for t in textures]),
            np.array([t.period for t in textures]))


def _shade(checker, base, contrast, period, u, z):
    phase = np.floor(u / period)
    phase = np.where(checker, phase + np.floor(z / period), phase)
    sign = np.where(np.mod(phase, 2) == 0, 1.0, -1.0)
    return base + contrast * sign


class _Canvas:
    """Depth-tested column painter."""

    def __init__(self, world: World, pose: AvatarPose, params: SimParams):
        self.params = params
        self.focal = params.focal
        self.horizon = params.height / 2 + self.focal * math.tan(math.radians(pose.pitch))
        yaw = math.radians(pose.yaw)
        offsets = np.arctan((np.arange(params.width) + 0.5 - params.width / 2) / self.focal)
        self.cos_off = np.cos(offsets)
        self.dirs = np.stack([np.cos(yaw + offsets), np.sin(yaw + offsets)], axis=1)
        self.rows = (np.arange(params.height) + 0.5)[:, None]
        self.image = np.where(self.rows < self.horizon, float(world.ceiling_shade),
                              float(world.floor_shade)) * np.ones((1, params.width))
        self.depth = np.full((params.height, params.width), np.inf)
        self.cast_rooms(world, pose)

    def cast_rooms(self, world: World, pose: AvatarPose):
        """Shade floor and ceiling pixels by the room in which their ray meets the plane."""
        shaded = [room for room in world.rooms if room.floor_shade is not None]
        if not shaded:
            return
        offset = self.rows - self.horizon
        below = np.broadcast_to(offset > 0, self.image.shape)
        drop = np.where(offset > 0, EYE_HEIGHT, world.wall_height - EYE_HEIGHT)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = drop * self.focal / np.abs(offset) / self.cos_off
            x = pose.x + t * self.dirs[:, 0]
            y = pose.y + t * self.dirs[:, 1]
        for room in shaded:
            inside = (x >= room.x0) & (x <= room.x1) & (y >= room.y0) & (y <= room.y1)
            self.image[inside & below] = room.floor_shade
            self.image[inside & ~below] = room.ceiling_shade

    def band(self, t, z0, z1):
        perp = t * self.cos_off
        with np.errstate(divide="ignore", invalid="ignore"):
            top = self.horizon - self.focal * (z1 - EYE_HEIGHT) / perp
            bottom = self.horizon - self.focal * (z0 - EYE_HEIGHT) / perp
        return (self.rows >= top) & (self.rows < bottom) & np.isfinite(t)

    def heights(self, t):
        perp = t * self.cos_off
        with np.errstate(invalid="ignore"):
            return EYE_HEIGHT - (self.rows - self.horizon) * perp / self.focal

    def paint(self, t, z0, z1, shade_fn):
        mask = self.band(t, z0, z1) & (t < self.depth)
        if not mask.any():
            return
        with np.errstate(all="ignore"):
            values = shade_fn(self.heights(t)) / (1 + self.params.falloff * t)
        self.image[mask] = np.broadcast_to(values, self.image.shape)[mask]
        self.depth[mask] = np.broadcast_to(t, self.depth.shape)[mask]

    def darken(self, t, factor):
        mask = self.band(t, 0.0, PORTAL_HEIGHT) & (self.depth > t)
        self.image[mask] *= factor


def render(world: World, pose: AvatarPose, params: SimParams, t=0) -> vision.Frame:
    canvas = _Canvas(world, pose, params)
    origin = (pose.x, pose.y)
    columns = np.arange(params.width)

    segments, texture_ids = world.walls
    t_all, s_all = ray_segments(origin, canvas.dirs, segments)
    nearest = np.argmin(t_all, axis=1)
    t_wall = t_all[columns, nearest]
    lengths = np.hypot(segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1])
    u_wall = s_all[columns, nearest] * lengths[nearest]
    checker, base, contrast, period = (a[nearest] for a in _texture_arrays(world, texture_ids))
    canvas.paint(t_wall, 0.0, world.wall_height,
                 lambda z: _shade(checker, base, contrast, period, u_wall, z))

    for portal in world.portals:
        seg = np.array([[portal.x0, portal.y0, portal.x1, portal.y1]])
        t_p, s_p = ray_segments(origin, canvas.dirs, seg)
        texture = world.texture(portal.texture)
        u = s_p[:, 0] * portal.width
        canvas.paint(t_p[:, 0], PORTAL_HEIGHT, world.wall_height,
                     lambda z, u=u, tx=texture: _shade(tx.kind == "checker", tx.base, tx.contrast, tx.period, u, z))

    for prop in world.props:
        texture = world.texture(prop.texture)
        if prop.kind == "cylinder":
            t_p = ray_circle(origin, canvas.dirs, (prop.cx, prop.cy), prop.size[0])
            with np.errstate(all="ignore"):
                hx = pose.x + t_p * canvas.dirs[:, 0]
                hy = pose.y + t_p * canvas.dirs[:, 1]
                u = prop.size[0] * np.arctan2(hy - prop.cy, hx - prop.cx)
        else:
            seg = np.array(prop.segments())
            t_s, s_s = ray_segments(origin, canvas.dirs, seg)
            side = np.argmin(t_s, axis=1)
            t_p = t_s[columns, side]
            u = s_s[columns, side] * np.where(side % 2 == 0, 2 * prop.size[0], 2 * prop.size[1])
        canvas.paint(t_p, 0.0, prop.height,
                     lambda z, u=u, tx=texture: _shade(tx.kind == "checker", tx.base, tx.contrast, tx.period, u, z))

    for decoy in world.decoys:
        seg = np.array([[decoy.x0, decoy.y0, decoy.x1, decoy.y1]])
        t_d, _ = ray_segments(origin, canvas.dirs, seg)
        canvas.paint(t_d[:, 0], decoy.z0, decoy.z1, lambda z, v=decoy.intensity: np.full_like(z, v))

    for portal in world.portals:
        if "dark" in portal.tags:
            seg = np.array([[portal.x0, portal.y0, portal.x1, portal.y1]])
            t_p, _ = ray_segments(origin, canvas.dirs, seg)
            canvas.darken(t_p[:, 0], params.dark_factor)

    return vision.Frame.from_array(canvas.image, t=t)


def _blocked(world: World, origin, targets: np.ndarray) -> np.ndarray:
    """Whether each sightline origin -> target is cut by a wall or prop."""
    dirs = targets - np.asarray(origin)
    segments, _ = world.walls
    box_segments = [seg for prop in world.props if prop.kind == "box" for seg in prop.segments()]
    if box_segments:
        segments = np.vstack([segments, np.array(box_segments)])
    t, _ = ray_segments(origin, dirs, segments)
    blocked = (t < 1 - 1e-6).any(axis=1)
    for prop in world.props:
        if prop.kind == "cylinder":
            blocked |= ray_circle(origin, dirs, (prop.cx, prop.cy), prop.size[0]) < 1 - 1e-6
    return blocked


def _free_space(world: World, eye, a, b, depth, samples=5) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    tangent = b - a
    normal = np.array([-tangent[1], tangent[0]]) / np.hypot(*tangent)
    if np.dot(np.asarray(eye) - (a + b) / 2, normal) < 0:
        normal = -normal
    fractions = (np.arange(samples) + 0.5) / samples
    walkable = [world.walkable(*(a + f * tangent + g * depth * normal))
                for f in fractions for g in fractions]
    return float(np.mean(walkable))


def _project(pose: AvatarPose, params: SimParams, a, b, z0, z1) -> Optional[perception.BBox]:
    yaw = math.radians(pose.yaw)
    forward = np.array([math.cos(yaw), math.sin(yaw)])
    right = np.array([-math.sin(yaw), math.cos(yaw)])
    eye = np.array([pose.x, pose.y])
    ends = []
    for p in (np.asarray(a), np.asarray(b)):
        ends.append((float(np.dot(p - eye, forward)), float(np.dot(p - eye, right))))
    (da, la), (db, lb) = ends
    if da < params.near and db < params.near:
        return None
    if da < params.near:
        w = (params.near - da) / (db - da)
        da, la = params.near, la + w * (lb - la)
    elif db < params.near:
        w = (params.near - db) / (da - db)
        db, lb = params.near, lb + w * (la - lb)
    focal = params.focal
    horizon = params.height / 2 + focal * math.tan(math.radians(pose.pitch))
    xs = [params.width / 2 + focal * la / da, params.width / 2 + focal * lb / db]
    tops = [horizon - focal * (z1 - EYE_HEIGHT) / d for d in (da, db)]
    bottoms = [horizon - focal * (z0 - EYE_HEIGHT) / d for d in (da, db)]
    return perception.clip_box(min(xs), min(tops), max(xs), max(bottoms), params.width, params.height)


def visible_portals(world: World, pose: AvatarPose, params: SimParams) -> List[perception.Projection]:
    """Project every portal (and decoy patch) that has an unobstructed sightline."""
    eye = (pose.x, pose.y)
    yaw = math.radians(pose.yaw)
    half_fov = math.radians(params.fov / 2)
    openings = [(p.id, (p.x0, p.y0), (p.x1, p.y1), 0.0, PORTAL_HEIGHT, p.tags, 1.0)
                for p in world.portals]
    openings += [(d.id, (d.x0, d.y0), (d.x1, d.y1), d.z0, d.z1, frozenset(["decoy"]), d.salience)
                 for d in world.decoys]

    projections = []
    n = params.occlusion_samples
    fractions = (np.arange(n) + 0.5) / n
    for opening_id, a, b, z0, z1, tags, salience in openings:
        a_arr = np.asarray(a, dtype=np.float64)
        b_arr = np.asarray(b, dtype=np.float64)
        samples = a_arr + fractions[:, None] * (b_arr - a_arr)
        rel = samples - np.asarray(eye)
        depth = rel[:, 0] * math.cos(yaw) + rel[:, 1] * math.sin(yaw)
        lateral = -rel[:, 0] * math.sin(yaw) + rel[:, 1] * math.cos(yaw)
        in_fov = (depth > params.near) & (np.abs(np.arctan2(lateral, depth)) <= half_fov)
        if not in_fov.any():
            continue
        blocked = _blocked(world, eye, samples[in_fov])
        if blocked.all():
            continue
        box = _project(pose, params, a, b, z0, z1)
        if box is None:
            continue
        projections.append(perception.Projection(
            portal_id=opening_id,
            box=box,
            occlusion=float(blocked.mean()),
            tags=frozenset(tags),
            free_space=_free_space(world, eye, a, b, params.free_space_depth),
            salience=salience,
        ))
    return projections


def _obstacles(world: World):
    segments, _ = world.walls
    box_segments = [seg for prop in world.props if prop.kind == "box" for seg in prop.segments()]
    if box_segments:
        segments = np.vstack([segments, np.array(box_segments)])
    circles = [(prop.cx, prop.cy, prop.size[0]) for prop in world.props if prop.kind == "cylinder"]
    return segments, circles


def _closest(segments: np.ndarray, circles, x, y):
    """Distance and outward normal to the nearest obstacle surface."""
    best = (np.inf, (0.0, 0.0))
    if len(segments):
        ax, ay = segments[:, 0], segments[:, 1]
        ex, ey = segments[:, 2] - ax, segments[:, 3] - ay
        length2 = ex * ex + ey * ey
        s = np.clip(((x - ax) * ex + (y - ay) * ey) / length2, 0.0, 1.0)
        cx, cy = ax + s * ex, ay + s * ey
        dist = np.hypot(x - cx, y - cy)
        i = int(np.argmin(dist))
        if dist[i] > 0:
            best = (float(dist[i]), ((x - cx[i]) / dist[i], (y - cy[i]) / dist[i]))
        else:
            best = (0.0, (0.0, 0.0))
    for cx, cy, radius in circles:
        centre = math.hypot(x - cx, y - cy)
        if centre - radius < best[0]:
            normal = ((x - cx) / centre, (y - cy) / centre) if centre > 0 else (0.0, 0.0)
            best = (centre - radius, normal)
    return best


def clearance(world: World, x, y) -> float:
    segments, circles = _obstacles(world)
    return _closest(segments, circles, x, y)[0]


def _move(world: World, x, y, yaw, params: SimParams):
    segments, circles = _obstacles(world)
    radius = params.avatar_radius
    vx = params.speed * math.cos(math.radians(yaw))
    vy = params.speed * math.sin(math.radians(yaw))
    for _ in range(MAX_SLIDE_ITERATIONS):
        nx, ny = x + vx, y + vy
        distance, (mx, my) = _closest(segments, circles, nx, ny)
        if distance >= radius - EPS:
            return nx, ny
        # Slide: drop the velocity component pointing into the obstacle.
        inward = vx * mx + vy * my
        if inward >= 0:
            return x, y
        vx, vy = vx - inward * mx, vy - inward * my
        if math.hypot(vx, vy) < EPS:
            return x, y
    return x, y


def _rotate(pose: AvatarPose, cam: Cam, taps: int, params: SimParams) -> AvatarPose:
    if cam is Cam.LEFT:
        return replace(pose, yaw=pose.yaw - taps * params.yaw_per_tap)
    if cam is Cam.RIGHT:
        return replace(pose, yaw=pose.yaw + taps * params.yaw_per_tap)
    if cam is Cam.UP:
        return replace(pose, pitch=min(45.0, pose.pitch + taps * params.pitch_per_tap))
    if cam is Cam.DOWN:
        return replace(pose, pitch=max(-45.0, pose.pitch - taps * params.pitch_per_tap))
    return pose


def apply_action(world: World, pose: AvatarPose, action: Action, params: SimParams) -> AvatarPose:
    """Advance one decision of ticks_per_decision ticks.

    Taps start every t_pulse + t_gap ticks from the first tick; taps that do
    not fit in the decision are applied after its last tick.
    """
    if action.forward_delta is ForwardDelta.PRESS:
        pose = replace(pose, forward_held=True)
    elif action.forward_delta is ForwardDelta.RELEASE:
        pose = replace(pose, forward_held=False)
    period = params.t_pulse + params.t_gap
    remaining = action.tap_count
    for tick in range(params.ticks_per_decision):
        if remaining and tick % period == 0:
            pose = _rotate(pose, action.cam, 1, params)
            remaining -= 1
        if pose.forward_held:
            x, y = _move(world, pose.x, pose.y, pose.yaw, params)
            pose = replace(pose, x=x, y=y)
    if remaining:
        pose = _rotate(pose, action.cam, remaining, params)
    return pose


def teleport(world: World, pose_spec: AvatarPose, params: SimParams = SimParams()) -> AvatarPose:
    if not world.in_room(pose_spec.x, pose_spec.y):
        raise InvalidPose(f"pose ({pose_spec.x}, {pose_spec.y}) lies outside every room")
    if clearance(world, pose_spec.x, pose_spec.y) < params.avatar_radius - EPS:
        raise InvalidPose(f"pose ({pose_spec.x}, {pose_spec.y}) intersects world geometry")
    if any(prop.contains(pose_spec.x, pose_spec.y) for prop in world.props):
        raise InvalidPose(f"pose ({pose_spec.x}, {pose_spec.y}) lies inside a prop")
    return replace(pose_spec, forward_held=False)


class Simulator:
    """One world, one avatar and a tick counter."""

    def __init__(self, world: World, params: SimParams = SimParams(), pose: Optional[AvatarPose] = None):
        self.world = world
        self.params = params
        self.pose = teleport(world, pose or world.spawn, params)
        self.tick = 0

    def render(self) -> vision.Frame:
        return render(self.world, self.pose, self.params, t=self.tick)

    def render_at(self, pose: AvatarPose) -> vision.Frame:
        return render(self.world, pose, self.params, t=self.tick)

    def visible_portals(self):
        return visible_portals(self.world, self.pose, self.params)

    def step(self, action: Action) -> AvatarPose:
        self.pose = apply_action(self.world, self.pose, action, self.params)
        self.tick += self.params.ticks_per_decision
        return self.pose

    def teleport(self, pose: AvatarPose) -> AvatarPose:
        self.pose = teleport(self.world, pose, self.params)
        return self.pose

    def release_forward(self) -> AvatarPose:
        self.pose = replace(self.pose, forward_held=False)
        return self.pose
