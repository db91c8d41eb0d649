"""Agent kinematics, the pick/place mode machine, corridors and exploration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

from .world import Arena, BrickKind, KINDS, Pose, wrap_pi

log = logging.getLogger(__name__)

UAV_SPEED_LIMIT = 15.0 / 3.6
UGV_SPEED_LIMIT = 30.0 / 3.6
CORRIDOR_HEIGHTS = (3.0, 5.0, 7.0)


class DegenerateFov(ValueError):
    pass


class AgentKind(str, Enum):
    UAV = "uav"
    UGV = "ugv"


class MissionMode(str, Enum):
    IDLE = "Idle"
    EXPLORE = "Explore"
    TRAVEL_TO_PICK = "TravelToPick"
    ALIGN_OVER_BRICK = "AlignOverBrick"
    DESCEND = "Descend"
    GRIP = "Grip"
    ASCEND = "Ascend"
    TRAVEL_TO_PLACE = "TravelToPlace"
    PLACE_ALIGN = "PlaceAlign"
    RELEASE = "Release"
    FAULT = "Fault"


PAYLOAD_MODES = frozenset(
    {MissionMode.ASCEND, MissionMode.TRAVEL_TO_PLACE, MissionMode.PLACE_ALIGN, MissionMode.RELEASE}
)


class Event(str, Enum):
    TASK_ASSIGNED = "TaskAssigned"
    EXPLORE_COMPLETE = "ExploreComplete"
    ARRIVED_AT_PICK = "ArrivedAtPick"
    CENTERED = "Centered"
    TOUCHED_DOWN = "TouchedDown"
    GRIP_CONFIRMED = "GripConfirmed"
    AT_CORRIDOR = "AtCorridor"
    ARRIVED_AT_PLACE = "ArrivedAtPlace"
    EDGE_LOCKED = "EdgeLocked"
    RELEASED = "Released"
    FAULT_RAISED = "FaultRaised"
    FAULT_CLEARED = "FaultCleared"


_TRANSITIONS: dict[tuple[MissionMode, Event], MissionMode] = {
    (MissionMode.EXPLORE, Event.EXPLORE_COMPLETE): MissionMode.IDLE,
    (MissionMode.TRAVEL_TO_PICK, Event.ARRIVED_AT_PICK): MissionMode.ALIGN_OVER_BRICK,
    (MissionMode.ALIGN_OVER_BRICK, Event.CENTERED): MissionMode.DESCEND,
    (MissionMode.DESCEND, Event.TOUCHED_DOWN): MissionMode.GRIP,
    (MissionMode.GRIP, Event.GRIP_CONFIRMED): MissionMode.ASCEND,
    (MissionMode.ASCEND, Event.AT_CORRIDOR): MissionMode.TRAVEL_TO_PLACE,
    (MissionMode.TRAVEL_TO_PLACE, Event.ARRIVED_AT_PLACE): MissionMode.PLACE_ALIGN,
    (MissionMode.PLACE_ALIGN, Event.EDGE_LOCKED): MissionMode.RELEASE,
    (MissionMode.RELEASE, Event.RELEASED): MissionMode.IDLE,
    (MissionMode.FAULT, Event.FAULT_CLEARED): MissionMode.IDLE,
}

_ASSIGNMENT_TARGETS = {"explore": MissionMode.EXPLORE, "pick": MissionMode.TRAVEL_TO_PICK}


def mode_transition(mode: MissionMode, event: Event, variant: str | None = None) -> MissionMode:
    """Next mission mode for ``event``; illegal pairs keep the current mode.

    ``variant`` names the assigned task ("explore" or "pick") for
    TaskAssigned events.
    """
    if event is Event.FAULT_RAISED:
        return MissionMode.FAULT
    if event is Event.TASK_ASSIGNED:
        if mode is MissionMode.IDLE and variant in _ASSIGNMENT_TARGETS:
            return _ASSIGNMENT_TARGETS[variant]
    else:
        nxt = _TRANSITIONS.get((mode, event))
        if nxt is not None:
            return nxt
    log.warning("ignoring event %s in mode %s", event.value, mode.value)
    return mode


class Twist(NamedTuple):
    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    yaw_rate: float = 0.0

    @property
    def speed(self) -> float:
        return math.sqrt(self.vx * self.vx + self.vy * self.vy + self.vz * self.vz)


ZERO_TWIST = Twist()


@dataclass(slots=True)
class AgentState:
    id: str
    kind: AgentKind
    pose: Pose
    velocity: Twist = ZERO_TWIST
    mode: MissionMode = MissionMode.IDLE
    payload: Optional[int] = None
    corridor_m: Optional[float] = None
    speed_limit_mps: float = UAV_SPEED_LIMIT
    yaw_rate_limit: float = 2.0
    fault_kind: Optional[str] = None

    @classmethod
    def uav(cls, agent_id: str, pose: Pose) -> AgentState:
        return cls(agent_id, AgentKind.UAV, pose, speed_limit_mps=UAV_SPEED_LIMIT)

    @classmethod
    def ugv(cls, agent_id: str, pose: Pose) -> AgentState:
        return cls(agent_id, AgentKind.UGV, Pose(pose.x, pose.y, 0.0, pose.yaw), speed_limit_mps=UGV_SPEED_LIMIT)

    @property
    def position(self) -> tuple[float, float, float]:
        p = self.pose
        return (p.x, p.y, p.z)


def saturate(command: Twist, state: AgentState) -> Twist:
    vx, vy, vz, wz = command
    if state.kind is AgentKind.UGV:
        vz = 0.0
    speed = math.sqrt(vx * vx + vy * vy + vz * vz)
    limit = state.speed_limit_mps
    if speed > limit:
        k = limit / speed
        vx, vy, vz = vx * k, vy * k, vz * k
    wz = max(-state.yaw_rate_limit, min(state.yaw_rate_limit, wz))
    return Twist(vx, vy, vz, wz)


def step_kinematics(state: AgentState, command: Twist, dt: float, arena: Arena | None = None) -> AgentState:
    """First-order integration: the saturated command is reached instantly."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = saturate(command, state)
    p = state.pose
    x, y, z = p.x + v.vx * dt, p.y + v.vy * dt, p.z + v.vz * dt
    yaw = wrap_pi(p.yaw + v.yaw_rate * dt) if v.yaw_rate else p.yaw
    if state.kind is AgentKind.UGV:
        z = 0.0
    if arena is not None:
        x, y, z = arena.clamp(x, y, z)
    return replace(state, pose=Pose(x, y, z, yaw), velocity=v)


def corridor_for(kind: BrickKind, heights: tuple[float, ...] = CORRIDOR_HEIGHTS) -> float:
    """Transit altitude for a carried brick: heavier bricks fly lower.

    Kinds are grouped into mass tiers, heaviest tier first, and tier i maps to
    the i-th lowest corridor.
    """
    tiers = sorted({k.mass_kg for k in KINDS}, reverse=True)
    idx = tiers.index(kind.mass_kg)
    return sorted(heights)[min(idx, len(heights) - 1)]


@dataclass(frozen=True)
class ExplorationPlan:
    waypoints: tuple[tuple[float, float, float], ...]
    strip_width_m: float
    passes: int


def strip_width(altitude: float, fov_rad: float) -> float:
    return 2.0 * altitude * math.tan(0.5 * fov_rad)


def lawnmower_plan(bounds: Arena, altitude: float, fov_rad: float) -> ExplorationPlan:
    """Boustrophedon sweep along the long axis of the arena.

    Pass spacing is the short extent divided evenly among the passes, which
    is never wider than the camera footprint.
    """
    if not 0.0 < fov_rad < math.pi:
        raise DegenerateFov(f"field of view must be in (0, pi), got {fov_rad}")
    if not bounds.zmin < altitude <= bounds.zmax:
        raise ValueError(f"altitude {altitude} outside arena height")
    width = strip_width(altitude, fov_rad)
    lx, ly = bounds.xmax - bounds.xmin, bounds.ymax - bounds.ymin
    along_x = lx >= ly
    extent = ly if along_x else lx
    passes = max(1, math.ceil(extent / width - 1e-12))
    spacing = extent / passes
    waypoints = []
    for i in range(passes):
        offset = (i + 0.5) * spacing
        if along_x:
            y = bounds.ymin + offset
            ends = [(bounds.xmin, y), (bounds.xmax, y)]
        else:
            x = bounds.xmin + offset
            ends = [(x, bounds.ymin), (x, bounds.ymax)]
        if i % 2:
            ends.reverse()
        waypoints.extend((a, b, altitude) for a, b in ends)
    return ExplorationPlan(tuple(waypoints), width, passes)
