"""PD servo loops for pickup centering, yaw, area descent, UGV approach and placement.

Derivative terms are one-tick backward differences on the error, with the
previous error starting at zero for every servo phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple, Optional

from .perception import BrickObservation, EdgeObservation
from .world import BrickKind, wrap_half_pi


class EdgeLost(RuntimeError):
    pass


@dataclass(frozen=True)
class PdGains:
    kp_cx: float = 0.004
    kd_cx: float = 0.008
    kp_cy: float = 0.004
    kd_cy: float = 0.008
    kp_yaw: float = 1.2
    kd_yaw: float = 0.4
    kp_area: float = 5e-6
    kd_area: float = 2e-6
    kp_v: float = 3e-5
    kp_z: float = 0.005
    kd_z: float = 0.01
    kp_place: float = 1.5
    kd_place: float = 0.5

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"gain {f.name} must be non-negative")

    @classmethod
    def zero(cls) -> PdGains:
        return cls(**{f.name: 0.0 for f in fields(cls)})


@dataclass
class ServoState:
    e_cx: float = 0.0
    e_cy: float = 0.0
    e_yaw: float = 0.0
    e_area: float = 0.0
    d_area: float = 0.0
    # placement loop: x, y, z, yaw errors in the agent frame
    e_place: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)

    def reset(self, d_area: float | None = None) -> None:
        self.e_cx = self.e_cy = self.e_yaw = self.e_area = 0.0
        self.e_place = (0.0, 0.0, 0.0, 0.0)
        if d_area is not None:
            self.d_area = d_area


def pixel_errors(obs: BrickObservation, width_px: float, height_px: float) -> tuple[float, float]:
    return obs.center_px[0] - 0.5 * width_px, obs.center_px[1] - 0.5 * height_px


def centering_command(
    obs: BrickObservation, width_px: float, height_px: float, gains: PdGains, state: ServoState
) -> tuple[float, float]:
    """Body-frame (V_x, V_y) that drives the brick centre to the image centre."""
    e_cx, e_cy = pixel_errors(obs, width_px, height_px)
    vx = gains.kp_cx * e_cx + gains.kd_cx * (e_cx - state.e_cx)
    vy = gains.kp_cy * e_cy + gains.kd_cy * (e_cy - state.e_cy)
    state.e_cx, state.e_cy = e_cx, e_cy
    return vx, vy


def yaw_command(obs: BrickObservation, gains: PdGains, state: ServoState) -> float:
    e = obs.yaw_rad
    wz = gains.kp_yaw * e + gains.kd_yaw * (e - state.e_yaw)
    state.e_yaw = e
    return wz


def descend_command(
    obs: BrickObservation,
    gains: PdGains,
    state: ServoState,
    width_px: float,
    height_px: float,
    center_tol_px: float = 2.0,
) -> float:
    """Vertical velocity from the area error; zero (hover) while off centre."""
    e = obs.area_px2 - state.d_area
    vz = gains.kp_area * e + gains.kd_area * (e - state.e_area)
    state.e_area = e
    e_cx, e_cy = pixel_errors(obs, width_px, height_px)
    if abs(e_cx) > center_tol_px or abs(e_cy) > center_tol_px:
        return 0.0
    return vz


def ugv_approach(
    obs: BrickObservation,
    width_px: float,
    gains: PdGains,
    state: ServoState,
    speed_limit: float = 30.0 / 3.6,
) -> tuple[float, float]:
    """Forward speed from the area deficit and turn rate from the horizontal pixel error.

    The returned rate is about the camera's image-down axis: a positive value
    turns the vehicle toward +x in the image, i.e. clockwise seen from above.
    """
    v = gains.kp_v * (state.d_area - obs.area_px2)
    v = min(max(v, 0.0), speed_limit)
    e_cx = obs.center_px[0] - 0.5 * width_px
    wz = gains.kp_z * e_cx + gains.kd_z * (e_cx - state.e_cx)
    state.e_cx = e_cx
    return v, wz


class PlaceCommand(NamedTuple):
    velocity: tuple[float, float, float]
    yaw_rate: float
    release: bool
    error_m: float
    error_yaw: float


def brick_target_from_edge(edge: EdgeObservation, kind: BrickKind) -> tuple[float, float, float]:
    """Centre of the next brick, half a brick beyond the detected edge."""
    half = 0.5 * kind.length_m
    return (
        edge.x + half * math.cos(edge.yaw),
        edge.y + half * math.sin(edge.yaw),
        edge.z,
    )


def place_alignment(
    edge: Optional[EdgeObservation],
    kind: BrickKind,
    held: tuple[float, float, float],
    gains: PdGains,
    state: ServoState,
    tolerance_m: float = 0.02,
    yaw_tolerance: float = 0.02,
    held_yaw: float = 0.0,
) -> PlaceCommand:
    """PD on the held brick's offset from its edge-derived target, in the agent frame."""
    if edge is None:
        raise EdgeLost("edge observation lost during placement")
    tx, ty, tz = brick_target_from_edge(edge, kind)
    ex, ey, ez = tx - held[0], ty - held[1], tz - held[2]
    eyaw = wrap_half_pi(edge.yaw - held_yaw)
    err = math.sqrt(ex * ex + ey * ey + ez * ez)
    px, py, pz, pyaw = state.e_place
    state.e_place = (ex, ey, ez, eyaw)
    if err < tolerance_m and abs(eyaw) < yaw_tolerance:
        return PlaceCommand((0.0, 0.0, 0.0), 0.0, True, err, eyaw)
    kp, kd = gains.kp_place, gains.kd_place
    vel = (kp * ex + kd * (ex - px), kp * ey + kd * (ey - py), kp * ez + kd * (ez - pz))
    wz = gains.kp_yaw * eyaw + gains.kd_yaw * (eyaw - pyaw)
    return PlaceCommand(vel, wz, False, err, eyaw)


def desired_area(cam_focal_px: float, kind: BrickKind, touchdown_depth: float) -> float:
    """Top-face image area at the touch-down depth."""
    return kind.length_m * kind.width_m * cam_focal_px**2 / touchdown_depth**2


def desired_face_area(cam_focal_px: float, kind: BrickKind, standoff: float) -> float:
    """Side-face image area seen by a forward camera at ``standoff`` (brick broadside)."""
    return kind.length_m * kind.height_m * cam_focal_px**2 / standoff**2
