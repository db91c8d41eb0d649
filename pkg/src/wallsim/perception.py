"""Analytic camera model standing in for brick and channel detection.

Downward camera frame: image +x along the body forward axis, image +y along
the body left axis, depth measured straight down. Forward camera frame:
optical axis along body forward, image +x toward the body right, image +y
downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, NamedTuple, Optional

from .world import (
    BRICK_HEIGHT,
    Arena,
    BrickInstance,
    BrickKind,
    Channel,
    Dashboard,
    Pose,
    SlotStatus,
    wrap_half_pi,
    wrap_pi,
)


class Mount(str, Enum):
    DOWNWARD = "downward"
    FORWARD = "forward"
    SIDE = "side"


@dataclass(frozen=True)
class CameraModel:
    focal_px: float = 400.0
    width_px: int = 640
    height_px: int = 480
    mount: Mount = Mount.DOWNWARD
    # mount offset in the agent body frame (forward, left, up)
    offset: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.focal_px <= 0 or self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("camera focal length and image size must be positive")

    def pose_from(self, agent: Pose) -> Pose:
        dx, dy, dz = self.offset
        c, s = math.cos(agent.yaw), math.sin(agent.yaw)
        return Pose(agent.x + c * dx - s * dy, agent.y + s * dx + c * dy, agent.z + dz, agent.yaw)

    def area_at(self, face_area_m2: float, depth: float) -> float:
        return face_area_m2 * self.focal_px**2 / depth**2


class BrickObservation(NamedTuple):
    center_px: tuple[float, float]
    yaw_rad: float
    area_px2: float
    depth_m: float
    brick_id: Optional[int] = None


class EdgeObservation(NamedTuple):
    x: float
    y: float
    z: float
    yaw: float
    layer: int
    along_m: float


class DiscoveryEvent(NamedTuple):
    landmark: str
    position: tuple[float, float]

    @property
    def name(self) -> str:
        return "".join(part.capitalize() for part in self.landmark.split("_")) + "Found"


@dataclass(frozen=True)
class NoiseModel:
    center_px: float = 0.0
    yaw_rad: float = 0.0
    area_frac: float = 0.0

    @property
    def active(self) -> bool:
        return self.center_px > 0 or self.yaw_rad > 0 or self.area_frac > 0


def _in_image(cam: CameraModel, u: float, v: float) -> bool:
    return 0.0 <= u <= cam.width_px and 0.0 <= v <= cam.height_px


def observe_brick(
    cam: CameraModel,
    cam_pose: Pose,
    brick: BrickInstance,
    noise: NoiseModel | None = None,
    rng=None,
) -> Optional[BrickObservation]:
    """Project a brick into the image; None when it is not in view."""
    if cam.mount is Mount.FORWARD:
        obs = _observe_forward(cam, cam_pose, brick.kind, brick.pose)
    else:
        obs = _observe_downward(cam, cam_pose, brick.kind, brick.pose)
    if obs is None:
        return None
    obs = obs._replace(brick_id=brick.id)
    if noise is not None and rng is not None and noise.active:
        obs = _perturb(cam, obs, noise, rng)
    return obs


def _observe_downward(cam: CameraModel, cam_pose: Pose, kind: BrickKind, pose: Pose) -> Optional[BrickObservation]:
    depth = cam_pose.z - (pose.z + 0.5 * BRICK_HEIGHT)
    if depth <= 0.0:
        return None
    ex, ey = pose.x - cam_pose.x, pose.y - cam_pose.y
    c, s = math.cos(cam_pose.yaw), math.sin(cam_pose.yaw)
    dx = c * ex + s * ey
    dy = -s * ex + c * ey
    f = cam.focal_px
    u = 0.5 * cam.width_px + f * dx / depth
    v = 0.5 * cam.height_px + f * dy / depth
    if not _in_image(cam, u, v):
        return None
    area = kind.length_m * kind.width_m * f * f / (depth * depth)
    return BrickObservation((u, v), wrap_half_pi(pose.yaw - cam_pose.yaw), area, depth)


def _observe_forward(cam: CameraModel, cam_pose: Pose, kind: BrickKind, pose: Pose) -> Optional[BrickObservation]:
    ex, ey, ez = pose.x - cam_pose.x, pose.y - cam_pose.y, pose.z - cam_pose.z
    c, s = math.cos(cam_pose.yaw), math.sin(cam_pose.yaw)
    depth = c * ex + s * ey
    left = -s * ex + c * ey
    if depth <= 0.0:
        return None
    f = cam.focal_px
    u = 0.5 * cam.width_px - f * left / depth
    v = 0.5 * cam.height_px - f * ez / depth
    if not _in_image(cam, u, v):
        return None
    rel = pose.yaw - cam_pose.yaw
    visible_width = abs(kind.length_m * math.sin(rel)) + abs(kind.width_m * math.cos(rel))
    area = visible_width * kind.height_m * f * f / (depth * depth)
    return BrickObservation((u, v), wrap_half_pi(rel), area, depth)


def _perturb(cam: CameraModel, obs: BrickObservation, noise: NoiseModel, rng) -> BrickObservation:
    u, v = obs.center_px
    u = min(max(u + rng.normal(0.0, noise.center_px), 0.0), cam.width_px) if noise.center_px else u
    v = min(max(v + rng.normal(0.0, noise.center_px), 0.0), cam.height_px) if noise.center_px else v
    yaw = wrap_half_pi(obs.yaw_rad + rng.normal(0.0, noise.yaw_rad)) if noise.yaw_rad else obs.yaw_rad
    area = obs.area_px2 * max(1e-3, 1.0 + rng.normal(0.0, noise.area_frac)) if noise.area_frac else obs.area_px2
    return obs._replace(center_px=(u, v), yaw_rad=yaw, area_px2=area)


def nearest_observation(
    cam: CameraModel,
    cam_pose: Pose,
    bricks: Iterable[BrickInstance],
    noise: NoiseModel | None = None,
    rng=None,
) -> Optional[BrickObservation]:
    """Report only the visible brick closest to the image centre."""
    best = None
    best_d = math.inf
    cx, cy = 0.5 * cam.width_px, 0.5 * cam.height_px
    for brick in bricks:
        obs = observe_brick(cam, cam_pose, brick)
        if obs is None:
            continue
        d = math.hypot(obs.center_px[0] - cx, obs.center_px[1] - cy)
        if d < best_d:
            best, best_d = obs, d
    if best is not None and noise is not None and rng is not None and noise.active:
        best = _perturb(cam, best, noise, rng)
    return best


def back_project(obs: BrickObservation, cam: CameraModel, depth: float) -> tuple[float, float]:
    """Recover the brick's (dx, dy) offset in the downward camera frame."""
    u, v = obs.center_px
    return (
        (u - 0.5 * cam.width_px) * depth / cam.focal_px,
        (v - 0.5 * cam.height_px) * depth / cam.focal_px,
    )


def edge_world(channel: Channel, dashboard: Dashboard) -> Optional[tuple[float, float, float, int, float]]:
    """World position of the free edge in the channel's working layer."""
    slots = dashboard.slots.get(channel.id, [])
    layer = None
    for slot in slots:
        if slot.status is not SlotStatus.FILLED:
            layer = slot.layer
            break
    if layer is None:
        return None
    along = 0.0
    for slot in slots:
        if slot.layer == layer and slot.status is SlotStatus.FILLED:
            along = max(along, slot.end_m)
    z = channel.origin[2] + layer * BRICK_HEIGHT + 0.5 * BRICK_HEIGHT
    x, y, _ = channel.point_at(along)
    return x, y, z, layer, along


def observe_edge(
    agent_pose: Pose,
    channel: Channel,
    dashboard: Dashboard,
    sensing_radius: float = 6.0,
) -> Optional[EdgeObservation]:
    """Free edge of the last laid brick (or the channel start) in the agent frame."""
    if _distance_to_channel(agent_pose, channel) > sensing_radius:
        return None
    found = edge_world(channel, dashboard)
    if found is None:
        return None
    x, y, z, layer, along = found
    ex, ey = x - agent_pose.x, y - agent_pose.y
    c, s = math.cos(agent_pose.yaw), math.sin(agent_pose.yaw)
    return EdgeObservation(
        c * ex + s * ey,
        -s * ex + c * ey,
        z - agent_pose.z,
        wrap_pi(channel.heading - agent_pose.yaw),
        layer,
        along,
    )


def _distance_to_channel(pose: Pose, channel: Channel) -> float:
    ox, oy, _ = channel.origin
    hx, hy = math.cos(channel.heading), math.sin(channel.heading)
    t = (pose.x - ox) * hx + (pose.y - oy) * hy
    t = min(max(t, 0.0), channel.length_m)
    return math.hypot(pose.x - (ox + t * hx), pose.y - (oy + t * hy))


def footprint_half_width(altitude: float, fov_rad: float) -> float:
    return altitude * math.tan(0.5 * fov_rad)


def discoveries(cam_pose: Pose, fov_rad: float, arena: Arena) -> set[DiscoveryEvent]:
    """Landmarks whose ground position falls inside the downward camera footprint."""
    if cam_pose.z <= 0.0:
        return set()
    half = footprint_half_width(cam_pose.z, fov_rad)
    c, s = math.cos(cam_pose.yaw), math.sin(cam_pose.yaw)
    found = set()
    for name, (lx, ly) in arena.landmarks.items():
        ex, ey = lx - cam_pose.x, ly - cam_pose.y
        if abs(c * ex + s * ey) <= half and abs(-s * ex + c * ey) <= half:
            found.add(DiscoveryEvent(name, (lx, ly)))
    return found
