"""Discrete-time mission loop tying the world, agents, servo control and planner together.

Each tick runs these stages in order:

1. scripted pauses, link restorations, connectivity timeouts, fault recovery
2. scheduler queries from idle agents
3. perception and control commands per agent (against the tick-start state)
4. kinematics with separation-aware deconfliction
5. fault draws for grip attempts, releases and link losses
6. mission-mode and dashboard updates, collision monitoring, invariant checks
7. logging

Everything random comes from one seeded generator and draws are made in
agent-id order, so identical (config, scenario, seed) triples replay exactly.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .agents import (
    CORRIDOR_HEIGHTS,
    AgentKind,
    AgentState,
    Event,
    MissionMode,
    PAYLOAD_MODES,
    Twist,
    ZERO_TWIST,
    corridor_for,
    lawnmower_plan,
    mode_transition,
    step_kinematics,
)
from .control import (
    EdgeLost,
    PdGains,
    ServoState,
    centering_command,
    descend_command,
    desired_area,
    desired_face_area,
    pixel_errors,
    place_alignment,
    ugv_approach,
    yaw_command,
)
from .perception import (
    BrickObservation,
    CameraModel,
    Mount,
    NoiseModel,
    discoveries,
    nearest_observation,
    observe_edge,
)
from .scenario import Scenario, ScriptedEvent, build_world
from .scheduler import (
    TASK_LOG_HEADER,
    Action,
    CostParams,
    FaultEvent,
    FaultKind,
    NothingToDo,
    Task,
    TaskScheduler,
    TaskStatus,
    TaskVariant,
    points_matrix,
)
from .world import (
    KINDS,
    Arena,
    BrickKind,
    BrickState,
    Dashboard,
    PileOwner,
    Pose,
    Site,
    SlotStatus,
    SpotStatus,
    wrap_half_pi,
    wrap_pi,
)

_EPS = 1e-9
_SNAP = 1e-6

SERVICE_MODES = frozenset(
    {
        MissionMode.ALIGN_OVER_BRICK,
        MissionMode.DESCEND,
        MissionMode.GRIP,
        MissionMode.ASCEND,
        MissionMode.PLACE_ALIGN,
        MissionMode.RELEASE,
    }
)
TRANSIT_MODES = frozenset({MissionMode.TRAVEL_TO_PICK, MissionMode.TRAVEL_TO_PLACE, MissionMode.ASCEND})

TRAJECTORY_HEADER = (
    "tick", "time", "agent", "x", "y", "z", "yaw", "vx", "vy", "vz", "yaw_rate", "mode", "corridor", "payload",
)
SERVO_HEADER = ("tick", "time", "agent", "loop", "error", "command")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.05
    seed: int = 0
    max_sim_time: float = 3600.0
    gains: PdGains = field(default_factory=PdGains)
    costs: CostParams = field(default_factory=CostParams)
    corridors: tuple[float, ...] = CORRIDOR_HEIGHTS
    p_pick_fail: float = 0.0
    p_place_fail: float = 0.0
    # expected link losses per agent per minute of mission time
    p_conn_loss: float = 0.0
    conn_outage_mean_s: float = 8.0
    conn_timeout_s: float = 10.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    center_tol_px: float = 2.0
    yaw_tol_rad: float = 0.02
    place_tol_m: float = 0.02
    area_tol: float = 0.02
    camera: CameraModel = field(default_factory=CameraModel)
    ugv_camera: CameraModel = field(
        default_factory=lambda: CameraModel(mount=Mount.FORWARD, offset=(0.3, 0.0, 0.1))
    )
    touchdown_depth: float = 0.35
    servo_depth: float = 2.0
    ugv_standoff: float = 0.6
    place_standoff: float = 0.6
    place_clearance: float = 0.3
    arm_stow: tuple[float, float, float] = (0.2, 0.0, 0.6)
    arm_speed: float = 1.0
    explore_altitude: float = 10.0
    explore_fov: float = math.pi / 2
    grip_s: float = 1.0
    release_s: float = 0.5
    arm_s: float = 1.0
    fault_recovery_s: float = 1.0
    drop_recovery_s: float = 5.0
    requery_s: float = 0.5
    sep_horizontal: float = 2.5
    sep_vertical: float = 2.0
    sep_ground: float = 2.0
    monitor_horizontal: float = 1.5
    monitor_vertical: float = 2.0
    monitor_ground: float = 1.5
    check_invariants: bool = True

    def __post_init__(self) -> None:
        if not (isinstance(self.dt, (int, float)) and math.isfinite(self.dt) and self.dt > 0):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.max_sim_time) and self.max_sim_time >= 0):
            raise ConfigError(f"max_sim_time must be non-negative, got {self.max_sim_time!r}")
        for name in ("p_pick_fail", "p_place_fail"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {p!r}")
        if self.p_conn_loss < 0:
            raise ConfigError(f"p_conn_loss must be non-negative, got {self.p_conn_loss!r}")
        if len(self.corridors) < 1 or min(self.corridors) <= 0:
            raise ConfigError("corridor heights must be positive")
        positive = (
            "center_tol_px", "yaw_tol_rad", "place_tol_m", "area_tol", "touchdown_depth", "servo_depth",
            "ugv_standoff", "place_standoff", "arm_speed", "explore_altitude", "conn_timeout_s",
            "conn_outage_mean_s",
        )
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        timers = ("grip_s", "release_s", "arm_s", "fault_recovery_s", "drop_recovery_s", "requery_s")
        for name in timers:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 < self.explore_fov < math.pi:
            raise ConfigError("explore_fov must be in (0, pi)")

    def with_faults(self, **probs: float) -> SimConfig:
        return replace(self, **probs)


# collision monitoring ------------------------------------------------------

class Violation(NamedTuple):
    a: str
    b: str
    horizontal: float
    vertical: float


def collision_monitor(
    agents: Sequence[AgentState],
    arena: Arena | None = None,
    horizontal: float = 1.5,
    vertical: float = 2.0,
    ground: float = 1.5,
) -> list[Violation]:
    """Pairs closer than the separation thresholds.

    Two UAVs violate when they are both horizontally closer than
    ``horizontal`` and vertically closer than ``vertical``. Any pair involving
    a UGV violates below ``ground`` metres (3-D) unless one of them is inside a
    pile or site service zone.
    """
    out = []
    ordered = sorted(agents, key=lambda s: s.id)
    for i, a in enumerate(ordered):
        pa = a.pose
        for b in ordered[i + 1:]:
            pb = b.pose
            h = math.hypot(pa.x - pb.x, pa.y - pb.y)
            v = abs(pa.z - pb.z)
            if a.kind is AgentKind.UAV and b.kind is AgentKind.UAV:
                if h < horizontal and v < vertical:
                    out.append(Violation(a.id, b.id, h, v))
                continue
            if arena is not None and (arena.zone_of(pa.x, pa.y) or arena.zone_of(pb.x, pb.y)):
                continue
            if math.hypot(h, v) < ground:
                out.append(Violation(a.id, b.id, h, v))
    return out


# fault injection -----------------------------------------------------------

@dataclass
class FaultContext:
    """What can fail during one tick."""

    grip_attempts: list[str] = field(default_factory=list)
    releases: list[str] = field(default_factory=list)
    connected: list[str] = field(default_factory=list)
    scripted: list[ScriptedEvent] = field(default_factory=list)
    dt: float = 0.05


def inject_faults(rng: np.random.Generator, config: SimConfig, context: FaultContext) -> list[FaultEvent]:
    """Draw this tick's faults. No draws are made for zero probabilities."""
    events = []
    for ev in context.scripted:
        events.append(FaultEvent(FaultKind.RESET_PAUSE, (), duration=ev.duration))
    for agent in sorted(context.grip_attempts):
        if _bernoulli(rng, config.p_pick_fail):
            events.append(FaultEvent(FaultKind.PICK_FAIL, (agent,)))
    for agent in sorted(context.releases):
        if _bernoulli(rng, config.p_place_fail):
            events.append(FaultEvent(FaultKind.PLACE_FAIL, (agent,)))
    if config.p_conn_loss > 0:
        p = 1.0 - math.exp(-config.p_conn_loss / 60.0 * context.dt)
        for agent in sorted(context.connected):
            if rng.random() < p:
                outage = float(rng.exponential(config.conn_outage_mean_s))
                events.append(FaultEvent(FaultKind.CONNECTIVITY_LOSS, (agent,), duration=outage))
    return events


def _bernoulli(rng: np.random.Generator, p: float) -> bool:
    if p <= 0.0:
        return False
    if p >= 1.0:
        return True
    return bool(rng.random() < p)


# servo steps shared by the engine and the standalone trials ---------------

class ServoStep(NamedTuple):
    # body-frame horizontal velocity, world vertical velocity, yaw rate
    command: Twist
    event: Optional[Event]
    e_cx: float
    e_cy: float
    e_yaw: float
    e_area: float
    guard_violation: bool = False


def uav_pick_servo(
    mode: MissionMode, obs: BrickObservation, cfg: SimConfig, servo: ServoState, d_area: float
) -> ServoStep:
    """One tick of the UAV centering/yaw/descent loops over a brick."""
    cam = cfg.camera
    e_cx, e_cy = pixel_errors(obs, cam.width_px, cam.height_px)
    tol = cfg.center_tol_px
    on_centre = abs(e_cx) <= tol and abs(e_cy) <= tol
    centered = on_centre and abs(obs.yaw_rad) <= cfg.yaw_tol_rad
    e_area = obs.area_px2 - d_area
    if mode is MissionMode.ALIGN_OVER_BRICK:
        if centered:
            return ServoStep(ZERO_TWIST, Event.CENTERED, e_cx, e_cy, obs.yaw_rad, e_area)
        vx, vy = centering_command(obs, cam.width_px, cam.height_px, cfg.gains, servo)
        wz = yaw_command(obs, cfg.gains, servo)
        return ServoStep(Twist(vx, vy, 0.0, wz), None, e_cx, e_cy, obs.yaw_rad, e_area)
    if centered and obs.area_px2 >= (1.0 - cfg.area_tol) * d_area:
        return ServoStep(ZERO_TWIST, Event.TOUCHED_DOWN, e_cx, e_cy, obs.yaw_rad, e_area)
    vx, vy = centering_command(obs, cam.width_px, cam.height_px, cfg.gains, servo)
    wz = yaw_command(obs, cfg.gains, servo)
    vz = descend_command(obs, cfg.gains, servo, cam.width_px, cam.height_px, tol)
    guard = (not on_centre) and vz != 0.0
    return ServoStep(Twist(vx, vy, vz, wz), None, e_cx, e_cy, obs.yaw_rad, e_area, guard)


class ServoTrace(NamedTuple):
    times: list[float]
    e_cx: list[float]
    e_cy: list[float]
    depth: list[float]
    vz: list[float]
    modes: list[str]
    centered_at: Optional[float]
    touchdown_at: Optional[float]
    guard_violations: int


def pick_servo_trial(
    dx: float,
    dy: float,
    depth: float = 2.0,
    kind: BrickKind = BrickKind.RED,
    config: SimConfig | None = None,
    max_time: float = 15.0,
    yaw_offset: float = 0.0,
) -> ServoTrace:
    """Closed-loop align-then-descend from a horizontal offset above one brick.

    The UAV starts ``(dx, dy)`` metres from the brick centre with its camera
    ``depth`` metres above the top face, and runs the same per-tick servo
    step as the full simulation.
    """
    from .world import BrickInstance

    cfg = config or SimConfig()
    brick = BrickInstance(0, kind, Pose(0.0, 0.0, 0.1, 0.0), BrickState.IN_PILE)
    state = AgentState.uav("trial", Pose(-dx, -dy, 0.2 + depth, yaw_offset))
    servo = ServoState()
    d_area = desired_area(cfg.camera.focal_px, kind, cfg.touchdown_depth)
    mode = MissionMode.ALIGN_OVER_BRICK
    times, ecx, ecy, depths, vzs, modes = [], [], [], [], [], []
    centered_at = touchdown_at = None
    guard = 0
    n = int(round(max_time / cfg.dt))
    for k in range(n):
        t = k * cfg.dt
        obs = nearest_observation(cfg.camera, cfg.camera.pose_from(state.pose), [brick])
        if obs is None:
            break
        step = uav_pick_servo(mode, obs, cfg, servo, d_area)
        times.append(t)
        ecx.append(step.e_cx)
        ecy.append(step.e_cy)
        depths.append(obs.depth_m)
        vzs.append(step.command.vz)
        modes.append(mode.value)
        guard += step.guard_violation
        if step.event is Event.CENTERED:
            centered_at = t
            mode = MissionMode.DESCEND
            servo.reset(d_area=d_area)
        elif step.event is Event.TOUCHED_DOWN:
            touchdown_at = t
            break
        state = step_kinematics(state, _body_to_world(state.pose.yaw, step.command), cfg.dt)
    return ServoTrace(times, ecx, ecy, depths, vzs, modes, centered_at, touchdown_at, guard)


def _body_to_world(yaw: float, cmd: Twist) -> Twist:
    c, s = math.cos(yaw), math.sin(yaw)
    return Twist(c * cmd.vx - s * cmd.vy, s * cmd.vx + c * cmd.vy, cmd.vz, cmd.yaw_rate)


def _body_point(pose: Pose, offset: tuple[float, float, float]) -> tuple[float, float, float]:
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    ox, oy, oz = offset
    return (pose.x + c * ox - s * oy, pose.y + s * ox + c * oy, pose.z + oz)


def _to_body(pose: Pose, point: Sequence[float]) -> tuple[float, float, float]:
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    ex, ey = point[0] - pose.x, point[1] - pose.y
    return (c * ex + s * ey, -s * ex + c * ey, point[2] - pose.z)


# metrics and logs ----------------------------------------------------------

@dataclass
class Metrics:
    total_points: float = 0.0
    makespan_s: Optional[float] = None
    sim_time_s: float = 0.0
    ticks: int = 0
    complete: bool = False
    slots_filled: int = 0
    slots_total: int = 0
    task_durations: dict = field(default_factory=dict)
    distance_m: dict = field(default_factory=dict)
    fault_counts: dict = field(default_factory=dict)
    corridor_violations: int = 0
    collision_violations: int = 0
    min_transit_vertical_sep: Optional[float] = None
    transit_pair_ticks: int = 0
    invariant_violations: int = 0
    layer_rule_violations: int = 0
    descent_guard_violations: int = 0
    speed_violations: int = 0
    max_speed_ratio: float = 0.0

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class SimLogs:
    trajectory: list[str] = field(default_factory=list)
    servo: list[str] = field(default_factory=list)
    tasks: list[tuple] = field(default_factory=list)
    points_timeline: list[tuple[float, float]] = field(default_factory=list)
    violations: list[tuple[int, Violation]] = field(default_factory=list)
    invariant_errors: list[tuple[int, str]] = field(default_factory=list)

    def trajectory_csv(self) -> str:
        return _csv(TRAJECTORY_HEADER, self.trajectory)

    def servo_csv(self) -> str:
        return _csv(SERVO_HEADER, self.servo)

    def tasks_csv(self) -> str:
        rows = []
        for tick, time, task_id, variant, agent, before, after, detail in self.tasks:
            rows.append(f"{tick},{time:.4f},{task_id},{variant},{agent},{before},{after},{detail}")
        return _csv(TASK_LOG_HEADER, rows)


def _csv(header: Sequence[str], rows: list[str]) -> str:
    return ",".join(header) + "\n" + "".join(r + "\n" for r in rows)


def write_outputs(out_dir: str | Path, metrics: Metrics, logs: SimLogs) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(logs.trajectory_csv())
    (out / "servo_errors.csv").write_text(logs.servo_csv())
    (out / "tasks.csv").write_text(logs.tasks_csv())
    (out / "metrics.json").write_text(json.dumps(metrics.to_dict(), indent=2, sort_keys=True) + "\n")


# per-agent runtime -----------------------------------------------------------

@dataclass
class _Runtime:
    state: AgentState
    home: Pose
    task: Optional[Task] = None
    place: Optional[Task] = None
    route: list = field(default_factory=list)
    face_yaw: Optional[float] = None
    servo: ServoState = field(default_factory=ServoState)
    d_area: float = 0.0
    timer: float = 0.0
    next_query: float = 0.0
    held: Optional[tuple[float, float, float]] = None
    held_yaw: float = 0.0
    link_until: Optional[float] = None
    fault_until: Optional[float] = None
    done: bool = False
    distance: float = 0.0
    command: Twist = ZERO_TWIST
    aim: Optional[tuple[float, float, float]] = None
    aim_yaw: Optional[float] = None
    transit: bool = False
    attempt: Optional[str] = None
    arm_ready: bool = False

    @property
    def id(self) -> str:
        return self.state.id

    @property
    def uav(self) -> bool:
        return self.state.kind is AgentKind.UAV


class Simulation:
    """Owns the world, agents and planner for one run."""

    def __init__(self, config: SimConfig, scenario: Scenario) -> None:
        self.config = config
        self.scenario = scenario
        self.arena, self.dashboard = build_world(scenario)
        self.rng = np.random.default_rng(config.seed)
        self.exploration = lawnmower_plan(self.arena, config.explore_altitude, config.explore_fov)
        sites = {a.id: (Site.UAV if a.kind is AgentKind.UAV else Site.UGV) for a in scenario.agents}
        self.points = points_matrix(scenario.points)
        self.scheduler = TaskScheduler(
            self.dashboard,
            self.exploration,
            self.points,
            config.costs,
            sites,
            connectivity_timeout=config.conn_timeout_s,
        )
        self.agents: list[_Runtime] = []
        for a in sorted(scenario.agents, key=lambda a: a.id):
            if a.kind is AgentKind.UAV:
                st = AgentState.uav(a.id, a.start)
            else:
                st = AgentState.ugv(a.id, a.start)
            self.agents.append(_Runtime(st, st.pose))
        self.by_id = {rt.id: rt for rt in self.agents}
        self.pile_approach = {}
        if scenario.ugv_pile is not None:
            self.pile_approach[PileOwner.UGV] = (
                scenario.ugv_pile.approach_heading,
                scenario.ugv_pile.approach_distance,
            )
        self.tick = 0
        self.time = 0.0
        self.paused_until: Optional[float] = None
        self.pending_scripts = sorted(scenario.scripted_events, key=lambda e: e.t)
        self.pending_drops: list[tuple[float, int]] = []
        self.metrics = Metrics(slots_total=len(self.dashboard.all_slots()))
        self.logs = SimLogs()
        self.fault_counts: Counter = Counter()
        self._last_revision = -1
        self._violating_pairs: set[tuple[str, str]] = set()
        self._min_transit_sep = math.inf
        self._log_agents()

    # helpers -------------------------------------------------------------

    @property
    def dt(self) -> float:
        return self.config.dt

    def _servo_log(self, rt: _Runtime, loop: str, error: float, command: float) -> None:
        self.logs.servo.append(f"{self.tick},{self.time:.4f},{rt.id},{loop},{error:.6f},{command:.6f}")

    def _transition(self, rt: _Runtime, event: Event, variant: str | None = None) -> None:
        rt.state.mode = mode_transition(rt.state.mode, event, variant)

    def _kind_of(self, rt: _Runtime) -> Optional[BrickKind]:
        if rt.state.payload is not None:
            return self.dashboard.bricks[rt.state.payload].kind
        if rt.task is not None:
            return rt.task.kind
        return None

    # stage 1: scripted events, links, timeouts, recovery -------------------

    def _stage_events(self) -> bool:
        """Returns True while the mission is paused."""
        t = self.time
        cfg = self.config
        if self.paused_until is not None and t >= self.paused_until - _EPS:
            self.paused_until = None
            self.scheduler.resume()
        due = []
        while self.pending_scripts and self.pending_scripts[0].t <= t + _EPS:
            due.append(self.pending_scripts.pop(0))
        if due:
            for ev in inject_faults(self.rng, cfg, FaultContext(scripted=due, dt=cfg.dt)):
                self.fault_counts[ev.kind.value] += 1
                self.scheduler.handle_fault(ev)
                end = t + ev.duration
                self.paused_until = end if self.paused_until is None else max(self.paused_until, end)
        if self.paused_until is not None:
            return True
        for rt in self.agents:
            if rt.link_until is not None and t >= rt.link_until - _EPS:
                rt.link_until = None
                self.scheduler.reconnect(rt.id)
                if rt.state.mode is MissionMode.FAULT:
                    rt.fault_until = t
        for agent in self.scheduler.expire_timeouts():
            rt = self.by_id[agent]
            self._fail_agent(rt, recover_at=None)
        for rt in self.agents:
            if (
                rt.state.mode is MissionMode.FAULT
                and rt.link_until is None
                and rt.fault_until is not None
                and t >= rt.fault_until - _EPS
            ):
                rt.fault_until = None
                rt.state.fault_kind = None
                self._transition(rt, Event.FAULT_CLEARED)
                rt.next_query = t
        while self.pending_drops and self.pending_drops[0][0] <= t + _EPS:
            _, brick_id = self.pending_drops.pop(0)
            self.dashboard.recover_brick(brick_id)
        return False

    def _fail_agent(self, rt: _Runtime, recover_at: Optional[float], kind: str = "ConnectivityLoss") -> None:
        """Drop whatever the agent carries and park it in Fault."""
        self._drop_payload(rt)
        self._transition(rt, Event.FAULT_RAISED)
        rt.state.fault_kind = kind
        rt.task = rt.place = None
        rt.route = []
        rt.face_yaw = None
        rt.state.corridor_m = None
        rt.fault_until = recover_at

    def _drop_payload(self, rt: _Runtime) -> None:
        bid = rt.state.payload
        if bid is None:
            return
        p = rt.state.pose
        if rt.held is not None:
            x, y, _ = _body_point(p, rt.held)
        else:
            x, y = p.x, p.y
        brick = self.dashboard.bricks[bid]
        self.dashboard.drop_brick(bid, Pose(x, y, 0.5 * brick.kind.height_m, brick.pose.yaw))
        self.pending_drops.append((self.time + self.config.drop_recovery_s, bid))
        self.pending_drops.sort()
        rt.state.payload = None
        rt.held = None

    # stage 2: task queries -------------------------------------------------

    def _stage_queries(self) -> None:
        t = self.time
        for rt in self.agents:
            if (
                rt.state.mode is not MissionMode.IDLE
                or rt.done
                or rt.link_until is not None
                or rt.task is not None
                or t < rt.next_query - _EPS
            ):
                continue
            self.scheduler.now, self.scheduler.tick = t, self.tick
            try:
                task = self.scheduler.allocate_task(rt.id, rt.state.position)
            except NothingToDo:
                rt.done = True
                task = None
            if task is None:
                rt.next_query = t + self.config.requery_s
                if not rt.route:
                    rt.route, rt.face_yaw = self._home_route(rt)
                continue
            rt.task = task
            rt.route = []
            rt.face_yaw = None
            if task.variant is TaskVariant.EXPLORE:
                self._transition(rt, Event.TASK_ASSIGNED, "explore")
                p = rt.state.pose
                rt.route = [(p.x, p.y, self.config.explore_altitude)] + list(task.plan.waypoints)
            else:
                self._transition(rt, Event.TASK_ASSIGNED, "pick")
                rt.route, rt.face_yaw = self._pick_route(rt, task)

    def _home_route(self, rt: _Runtime):
        p, h = rt.state.pose, rt.home
        if rt.uav:
            park = max(self.config.corridors)
            if math.hypot(p.x - h.x, p.y - h.y) < _SNAP:
                route = [(h.x, h.y, h.z)]
            else:
                route = [(p.x, p.y, max(p.z, park)), (h.x, h.y, max(p.z, park)), (h.x, h.y, h.z)]
            return route, None
        return [(h.x, h.y, 0.0)], h.yaw

    def _pick_route(self, rt: _Runtime, task: Task):
        spot = self.dashboard.spots[task.spot]
        p = rt.state.pose
        if rt.uav:
            c = corridor_for(task.kind, self.config.corridors)
            rt.state.corridor_m = c
            servo_z = spot.top_z() + self.config.servo_depth
            return [(p.x, p.y, c), (spot.pose.x, spot.pose.y, c), (spot.pose.x, spot.pose.y, servo_z)], None
        heading, dist = self.pile_approach.get(spot.owner, (0.0, 4.0))
        ax = spot.pose.x - dist * math.cos(heading)
        ay = spot.pose.y - dist * math.sin(heading)
        return [(ax, ay, 0.0)], heading

    def _place_route(self, rt: _Runtime, task: Task):
        dash = self.dashboard
        slot = dash.slot(task.slot)
        ch = dash.channels[task.channel]
        tp = slot.target_pose
        p = rt.state.pose
        if rt.uav:
            c = rt.state.corridor_m
            hx, hy, hz = rt.held
            cy, sy = math.cos(p.yaw), math.sin(p.yaw)
            ax = tp.x - (cy * hx - sy * hy)
            ay = tp.y - (sy * hx + cy * hy)
            az = tp.z - hz + self.config.place_clearance
            return [(ax, ay, c), (ax, ay, az)], None
        nx, ny = -math.sin(ch.heading), math.cos(ch.heading)
        d = self.config.place_standoff * ch.approach_side
        sx, sy = tp.x + d * nx, tp.y + d * ny
        face = math.atan2(-ch.approach_side * ny, -ch.approach_side * nx)
        return [(sx, sy, 0.0)], face

    # stage 3: control --------------------------------------------------------

    def _stage_control(self) -> None:
        for rt in self.agents:
            rt.command = ZERO_TWIST
            rt.aim = None
            rt.aim_yaw = None
            rt.transit = False
            rt.attempt = None
            if rt.link_until is not None:
                continue
            mode = rt.state.mode
            handler = _HANDLERS.get(mode)
            if handler is not None:
                handler(self, rt)

    def _follow(self, rt: _Runtime) -> bool:
        """Command toward the next waypoint; True once the route is exhausted."""
        p = rt.state.pose
        while rt.route:
            wx, wy, wz = rt.route[0]
            if abs(p.x - wx) < _SNAP and abs(p.y - wy) < _SNAP and abs(p.z - wz) < _SNAP:
                rt.route.pop(0)
                continue
            break
        if not rt.route:
            if rt.face_yaw is not None:
                err = wrap_pi(rt.face_yaw - p.yaw)
                if abs(err) > _SNAP:
                    rate = max(-rt.state.yaw_rate_limit, min(rt.state.yaw_rate_limit, err / self.dt))
                    rt.command = Twist(0.0, 0.0, 0.0, rate)
                    rt.aim_yaw = rt.face_yaw
                    return False
            return True
        wx, wy, wz = rt.route[0]
        dx, dy, dz = wx - p.x, wy - p.y, wz - p.z
        limit = rt.state.speed_limit_mps
        rt.transit = True
        if rt.uav:
            d = math.sqrt(dx * dx + dy * dy + dz * dz)
            s = min(limit, d / self.dt)
            rt.command = Twist(dx / d * s, dy / d * s, dz / d * s, 0.0)
            rt.aim = (wx, wy, wz)
            return False
        d = math.hypot(dx, dy)
        err = wrap_pi(math.atan2(dy, dx) - p.yaw)
        if abs(err) > _SNAP:
            rate = max(-rt.state.yaw_rate_limit, min(rt.state.yaw_rate_limit, err / self.dt))
            rt.command = Twist(0.0, 0.0, 0.0, rate)
            rt.aim_yaw = wrap_pi(p.yaw + err) if abs(err) <= rt.state.yaw_rate_limit * self.dt else None
            return False
        s = min(limit, d / self.dt)
        rt.command = Twist(dx / d * s, dy / d * s, 0.0, 0.0)
        rt.aim = (wx, wy, 0.0)
        return False

    def _idle(self, rt: _Runtime) -> None:
        if rt.route or rt.face_yaw is not None:
            if self._follow(rt):
                rt.face_yaw = None
            if rt.uav:
                rt.state.corridor_m = None

    def _explore(self, rt: _Runtime) -> None:
        if self._follow(rt) or self.dashboard.all_discovered():
            self._finish_explore(rt)

    def _finish_explore(self, rt: _Runtime) -> None:
        self.scheduler.now, self.scheduler.tick = self.time, self.tick
        self.scheduler.complete_explore(rt.task)
        rt.task = None
        rt.route = []
        rt.command = ZERO_TWIST
        rt.transit = False
        rt.aim = None
        self._transition(rt, Event.EXPLORE_COMPLETE)
        rt.next_query = self.time

    def _travel_to_pick(self, rt: _Runtime) -> None:
        if self._follow(rt):
            rt.face_yaw = None
            rt.servo.reset()
            self._transition(rt, Event.ARRIVED_AT_PICK)
            if rt.uav:
                rt.state.corridor_m = None
                rt.d_area = desired_area(self.config.camera.focal_px, rt.task.kind, self.config.touchdown_depth)
            else:
                rt.d_area = desired_face_area(
                    self.config.ugv_camera.focal_px, rt.task.kind, self.config.ugv_standoff
                )
                rt.servo.reset(d_area=rt.d_area)

    def _observe_target(self, rt: _Runtime, cam: CameraModel) -> Optional[BrickObservation]:
        spot = self.dashboard.spots[rt.task.spot]
        top = self.dashboard.top_brick(spot)
        if top is None:
            return None
        return nearest_observation(cam, cam.pose_from(rt.state.pose), [top], self.config.noise, self.rng)

    def _align(self, rt: _Runtime) -> None:
        if rt.uav:
            self._uav_servo(rt)
            return
        cfg = self.config
        cam = cfg.ugv_camera
        obs = self._observe_target(rt, cam)
        if obs is None:
            return
        e_cx = obs.center_px[0] - 0.5 * cam.width_px
        if abs(e_cx) <= cfg.center_tol_px and obs.area_px2 >= (1.0 - cfg.area_tol) * rt.d_area:
            self._transition(rt, Event.CENTERED)
            rt.timer = cfg.arm_s
            return
        v, wz = ugv_approach(obs, cam.width_px, cfg.gains, rt.servo, rt.state.speed_limit_mps)
        yaw = rt.state.pose.yaw
        # the approach turn rate is about the image-down axis
        rt.command = Twist(v * math.cos(yaw), v * math.sin(yaw), 0.0, -wz)
        self._servo_log(rt, "ugv_cx", e_cx, -wz)
        self._servo_log(rt, "ugv_area", obs.area_px2 - rt.d_area, v)

    def _uav_servo(self, rt: _Runtime) -> None:
        obs = self._observe_target(rt, self.config.camera)
        if obs is None:
            return
        mode = rt.state.mode
        step = uav_pick_servo(mode, obs, self.config, rt.servo, rt.d_area)
        self.metrics.descent_guard_violations += step.guard_violation
        if step.event is Event.CENTERED:
            self._transition(rt, Event.CENTERED)
            rt.servo.reset(d_area=rt.d_area)
            return
        if step.event is Event.TOUCHED_DOWN:
            self._transition(rt, Event.TOUCHED_DOWN)
            rt.timer = self.config.grip_s
            return
        rt.command = _body_to_world(rt.state.pose.yaw, step.command)
        self._servo_log(rt, "cx", step.e_cx, step.command.vx)
        self._servo_log(rt, "cy", step.e_cy, step.command.vy)
        self._servo_log(rt, "yaw", step.e_yaw, step.command.yaw_rate)
        if mode is MissionMode.DESCEND:
            self._servo_log(rt, "area", step.e_area, step.command.vz)

    def _descend(self, rt: _Runtime) -> None:
        if rt.uav:
            self._uav_servo(rt)
            return
        rt.timer -= self.dt
        if rt.timer <= _EPS:
            self._transition(rt, Event.TOUCHED_DOWN)
            rt.timer = self.config.grip_s

    def _grip(self, rt: _Runtime) -> None:
        rt.timer -= self.dt
        if rt.timer <= _EPS:
            rt.attempt = "grip"

    def _ascend(self, rt: _Runtime) -> None:
        if rt.uav:
            if not self._follow(rt):
                return
        elif not rt.arm_ready:
            rt.timer -= self.dt
            if rt.timer > _EPS:
                return
            rt.held = self.config.arm_stow
            rt.arm_ready = True
        if rt.place is None and self.time >= rt.next_query - _EPS:
            kind = self.dashboard.bricks[rt.state.payload].kind
            self.scheduler.now, self.scheduler.tick = self.time, self.tick
            rt.place = self.scheduler.request_place(rt.id, kind, rt.state.position)
            rt.next_query = self.time + self.config.requery_s
        if rt.place is None:
            return
        self._transition(rt, Event.AT_CORRIDOR)
        rt.arm_ready = False
        rt.route, rt.face_yaw = self._place_route(rt, rt.place)

    def _travel_to_place(self, rt: _Runtime) -> None:
        if self._follow(rt):
            rt.face_yaw = None
            rt.servo.reset()
            rt.state.corridor_m = None
            self._transition(rt, Event.ARRIVED_AT_PLACE)

    def _place_align(self, rt: _Runtime) -> None:
        cfg = self.config
        dash = self.dashboard
        ch = dash.channels[rt.place.channel]
        kind = dash.bricks[rt.state.payload].kind
        edge = observe_edge(rt.state.pose, ch, dash)
        try:
            cmd = place_alignment(
                edge, kind, rt.held, cfg.gains, rt.servo, cfg.place_tol_m, cfg.yaw_tol_rad, rt.held_yaw
            )
        except EdgeLost:
            return
        self._servo_log(rt, "place", cmd.error_m, math.sqrt(sum(v * v for v in cmd.velocity)))
        self._servo_log(rt, "place_yaw", cmd.error_yaw, cmd.yaw_rate)
        if cmd.release:
            self._transition(rt, Event.EDGE_LOCKED)
            rt.timer = cfg.release_s
            return
        if rt.uav:
            vx, vy, vz = cmd.velocity
            rt.command = _body_to_world(rt.state.pose.yaw, Twist(vx, vy, vz, cmd.yaw_rate))
            return
        # the ground vehicle stays put and moves the arm
        vx, vy, vz = cmd.velocity
        speed = math.sqrt(vx * vx + vy * vy + vz * vz)
        if speed > cfg.arm_speed:
            k = cfg.arm_speed / speed
            vx, vy, vz = vx * k, vy * k, vz * k
        hx, hy, hz = rt.held
        rt.held = (hx + vx * self.dt, hy + vy * self.dt, hz + vz * self.dt)
        rt.held_yaw = wrap_half_pi(rt.held_yaw + cmd.yaw_rate * self.dt)

    def _release(self, rt: _Runtime) -> None:
        rt.timer -= self.dt
        if rt.timer <= _EPS:
            rt.attempt = "release"

    # stage 4: kinematics with deconfliction ---------------------------------

    def _stage_move(self) -> None:
        order = sorted(self.agents, key=lambda r: (0 if r.state.mode in SERVICE_MODES else 1, r.id))
        committed: dict[str, AgentState] = {}
        current = {rt.id: rt.state for rt in self.agents}
        for rt in order:
            old = rt.state
            new = self._try_move(rt, rt.command, committed, current, snap=True)
            if new is None and rt.transit and rt.state.kind is AgentKind.UAV:
                for alt in self._sidesteps(rt, committed, current):
                    new = self._try_move(rt, alt, committed, current, snap=False)
                    if new is not None:
                        break
            if new is None and self._climbing_out(rt):
                # boxed in under another UAV: slide sideways and climb from there instead
                for alt in self._escapes(rt, committed, current):
                    new = self._try_move(rt, alt, committed, current, snap=False)
                    if new is not None:
                        rt.route[0] = (new.pose.x, new.pose.y, rt.route[0][2])
                        break
            if new is None:
                new = replace(old, velocity=ZERO_TWIST)
            committed[rt.id] = new
            rt.distance += math.dist(old.position, new.position)
            rt.state = new

    def _try_move(self, rt, cmd, committed, current, snap) -> Optional[AgentState]:
        old = rt.state
        if cmd == ZERO_TWIST:
            return replace(old, velocity=ZERO_TWIST)
        new = step_kinematics(old, cmd, self.dt, self.arena)
        p = new.pose
        if snap and rt.aim is not None:
            ax, ay, az = rt.aim
            if abs(p.x - ax) < _SNAP and abs(p.y - ay) < _SNAP and abs(p.z - az) < _SNAP:
                new.pose = Pose(ax, ay, az, p.yaw)
        if snap and rt.aim_yaw is not None and abs(wrap_pi(new.pose.yaw - rt.aim_yaw)) < _SNAP:
            new.pose = new.pose._replace(yaw=rt.aim_yaw)
        for other in self.agents:
            if other is rt:
                continue
            theirs = committed.get(other.id) or current[other.id]
            if not self._pair_safe(new, theirs, old):
                return None
        return new

    def _pair_safe(self, mine: AgentState, theirs: AgentState, before: AgentState) -> bool:
        cfg = self.config
        a, b = mine.pose, theirs.pose
        h = math.hypot(a.x - b.x, a.y - b.y)
        v = abs(a.z - b.z)
        if mine.kind is AgentKind.UAV and theirs.kind is AgentKind.UAV:
            if h >= cfg.sep_horizontal - _EPS or v >= cfg.sep_vertical - _EPS:
                return True
        else:
            zone = self.arena.zone_of
            if zone(a.x, a.y) or zone(b.x, b.y) or math.hypot(h, v) >= cfg.sep_ground - _EPS:
                return True
        # already too close: only moves that do not close the gap are allowed
        o = before.pose
        h0 = math.hypot(o.x - b.x, o.y - b.y)
        v0 = abs(o.z - b.z)
        return h >= h0 - _EPS and v >= v0 - _EPS

    def _sidesteps(self, rt: _Runtime, committed, current) -> list[Twist]:
        cmd = rt.command
        hs = math.hypot(cmd.vx, cmd.vy)
        if hs < _EPS:
            return []
        p = rt.state.pose
        blocker = None
        best = math.inf
        for other in self.agents:
            if other is rt:
                continue
            q = (committed.get(other.id) or current[other.id]).pose
            d = math.hypot(q.x - p.x, q.y - p.y)
            if d < best:
                best, blocker = d, q
        side = 1.0
        if blocker is not None:
            bx, by = blocker.x - p.x, blocker.y - p.y
            # turn away from the blocker
            side = -1.0 if cmd.vx * by - cmd.vy * bx > 0 else 1.0
        out = []
        for ang in (side * math.pi / 4, side * math.pi / 2, -side * math.pi / 4, -side * math.pi / 2):
            c, s = math.cos(ang), math.sin(ang)
            out.append(Twist(c * cmd.vx - s * cmd.vy, s * cmd.vx + c * cmd.vy, 0.0, 0.0))
        return out

    def _climbing_out(self, rt: _Runtime) -> bool:
        """A UAV outside the service modes whose next leg is a straight climb."""
        if not rt.uav or not rt.route or rt.state.mode in SERVICE_MODES:
            return False
        p = rt.state.pose
        wx, wy, wz = rt.route[0]
        return abs(wx - p.x) < _SNAP and abs(wy - p.y) < _SNAP and wz > p.z

    def _escapes(self, rt: _Runtime, committed, current) -> list[Twist]:
        p = rt.state.pose
        nearest = None
        best = math.inf
        for other in self.agents:
            if other is rt or not other.uav:
                continue
            q = (committed.get(other.id) or current[other.id]).pose
            d = math.hypot(q.x - p.x, q.y - p.y)
            if d < best:
                best, nearest = d, q
        if nearest is None:
            return []
        if best > _EPS:
            ux, uy = (p.x - nearest.x) / best, (p.y - nearest.y) / best
        else:
            hx, hy = rt.home.x - p.x, rt.home.y - p.y
            n = math.hypot(hx, hy)
            ux, uy = (hx / n, hy / n) if n > _EPS else (1.0, 0.0)
        s = rt.state.speed_limit_mps
        return [Twist(s * ux, s * uy), Twist(-s * uy, s * ux), Twist(s * uy, -s * ux)]

    # stage 5/6: faults and outcomes -----------------------------------------

    def _stage_outcomes(self) -> None:
        cfg = self.config
        ctx = FaultContext(dt=cfg.dt)
        for rt in self.agents:
            if rt.attempt == "grip":
                ctx.grip_attempts.append(rt.id)
            elif rt.attempt == "release":
                ctx.releases.append(rt.id)
            if rt.link_until is None and not rt.done:
                ctx.connected.append(rt.id)
        events = inject_faults(self.rng, cfg, ctx)
        failed = {(ev.kind, ev.agents[0]) for ev in events if ev.agents}
        self.scheduler.now, self.scheduler.tick = self.time + cfg.dt, self.tick
        for rt in self.agents:
            if rt.attempt == "grip":
                if (FaultKind.PICK_FAIL, rt.id) in failed:
                    self._apply_fault(FaultEvent(FaultKind.PICK_FAIL, (rt.id,), spot=rt.task.spot))
                else:
                    self._grip_success(rt)
            elif rt.attempt == "release":
                if (FaultKind.PLACE_FAIL, rt.id) in failed:
                    self._apply_fault(FaultEvent(FaultKind.PLACE_FAIL, (rt.id,), slot=rt.place.slot))
                else:
                    self._release_success(rt)
        for ev in events:
            if ev.kind is FaultKind.CONNECTIVITY_LOSS:
                self._apply_fault(ev)

    def _apply_fault(self, ev: FaultEvent) -> None:
        self.fault_counts[ev.kind.value] += 1
        actions = self.scheduler.handle_fault(ev)
        t_next = self.time + self.dt
        for action, agent in actions:
            rt = self.by_id.get(agent) if agent else None
            if action is Action.DROP_PAYLOAD:
                self._drop_payload(rt)
            elif action is Action.ENTER_FAULT:
                self._fail_agent(rt, t_next + self.config.fault_recovery_s, ev.kind.value)
            elif action is Action.AWAIT_TIMEOUT:
                rt.link_until = t_next + ev.duration

    def _grip_success(self, rt: _Runtime) -> None:
        dash = self.dashboard
        spot = dash.spots[rt.task.spot]
        brick = dash.take_top(spot, rt.id)
        rt.state.payload = brick.id
        rt.held = _to_body(rt.state.pose, (brick.pose.x, brick.pose.y, brick.pose.z))
        rt.held_yaw = wrap_half_pi(brick.pose.yaw - rt.state.pose.yaw)
        rt.place = self.scheduler.complete_pick(rt.task, rt.state.position)
        rt.task = None
        self._transition(rt, Event.GRIP_CONFIRMED)
        rt.next_query = self.time + self.config.requery_s
        if rt.uav:
            c = corridor_for(brick.kind, self.config.corridors)
            rt.state.corridor_m = c
            p = rt.state.pose
            rt.route = [(p.x, p.y, c)]
        else:
            rt.timer = self.config.arm_s
            rt.arm_ready = False

    def _release_success(self, rt: _Runtime) -> None:
        p = rt.state.pose
        x, y, z = _body_point(p, rt.held)
        pose = Pose(x, y, z, wrap_pi(p.yaw + rt.held_yaw))
        slot = self.dashboard.slot(rt.place.slot)
        lower = [s for s in self.dashboard.slots[slot.channel_id] if s.layer < slot.layer]
        if any(s.status is not SlotStatus.FILLED for s in lower):
            self.metrics.layer_rule_violations += 1
        self.scheduler.complete_place(rt.place, rt.state.payload, pose)
        rt.state.payload = None
        rt.held = None
        rt.place = None
        self._transition(rt, Event.RELEASED)
        rt.next_query = self.time + self.dt
        self.logs.points_timeline.append((self.time + self.dt, self.total_points()))
        if self.dashboard.complete():
            self.metrics.makespan_s = self.time + self.dt

    # stage 6: monitors ------------------------------------------------------

    def _stage_monitor(self) -> None:
        cfg = self.config
        states = [rt.state for rt in self.agents]
        violations = collision_monitor(
            states, self.arena, cfg.monitor_horizontal, cfg.monitor_vertical, cfg.monitor_ground
        )
        pairs = set()
        for v in violations:
            self.logs.violations.append((self.tick, v))
            pairs.add((v.a, v.b))
            if (v.a, v.b) not in self._violating_pairs:
                self._apply_fault(FaultEvent(FaultKind.COLLISION, (v.a, v.b)))
        self._violating_pairs = pairs
        self.metrics.collision_violations += len(violations)
        uavs = [rt for rt in self.agents if rt.uav]
        for i, a in enumerate(uavs):
            sa = a.state
            for b in uavs[i + 1:]:
                sb = b.state
                if self._at_corridor(sa) and self._at_corridor(sb):
                    h = math.hypot(sa.pose.x - sb.pose.x, sa.pose.y - sb.pose.y)
                    if sa.corridor_m != sb.corridor_m or h < cfg.sep_horizontal:
                        dz = abs(sa.pose.z - sb.pose.z)
                        self.metrics.transit_pair_ticks += 1
                        self._min_transit_sep = min(self._min_transit_sep, dz)
                        if dz < cfg.sep_vertical - _EPS:
                            self.metrics.corridor_violations += 1
        for v in violations:
            if self.by_id[v.a].uav and self.by_id[v.b].uav:
                self.metrics.corridor_violations += 1
        for rt in self.agents:
            st = rt.state
            ratio = st.velocity.speed / st.speed_limit_mps
            self.metrics.max_speed_ratio = max(self.metrics.max_speed_ratio, ratio)
            if st.velocity.speed > st.speed_limit_mps + _EPS:
                self.metrics.speed_violations += 1
            if (st.payload is not None) != (st.mode in PAYLOAD_MODES):
                self._invariant(f"{st.id}: payload {st.payload} in mode {st.mode.value}")
            if st.kind is AgentKind.UGV and st.pose.z != 0.0:
                self._invariant(f"{st.id}: ground vehicle left the ground")
        if cfg.check_invariants and self.dashboard.revision != self._last_revision:
            self._last_revision = self.dashboard.revision
            for msg in check_invariants(self.dashboard, self.scheduler):
                if msg.startswith("layer"):
                    self.metrics.layer_rule_violations += 1
                self._invariant(msg)

    @staticmethod
    def _at_corridor(st: AgentState) -> bool:
        return (
            st.mode in TRANSIT_MODES
            and st.corridor_m is not None
            and abs(st.pose.z - st.corridor_m) < _SNAP
            and math.hypot(st.velocity.vx, st.velocity.vy) > 0.0
        )

    def _invariant(self, msg: str) -> None:
        self.metrics.invariant_violations += 1
        if len(self.logs.invariant_errors) < 100:
            self.logs.invariant_errors.append((self.tick, msg))

    # stage 7: logging -------------------------------------------------------

    def _log_agents(self) -> None:
        t = self.time
        rows = self.logs.trajectory
        for rt in self.agents:
            st = rt.state
            p, v = st.pose, st.velocity
            corridor = "" if st.corridor_m is None else f"{st.corridor_m:g}"
            payload = "" if st.payload is None else str(st.payload)
            rows.append(
                f"{self.tick},{t:.4f},{st.id},{p.x:.4f},{p.y:.4f},{p.z:.4f},{p.yaw:.4f},"
                f"{v.vx:.4f},{v.vy:.4f},{v.vz:.4f},{v.yaw_rate:.4f},{st.mode.value},{corridor},{payload}"
            )

    # driver -----------------------------------------------------------------

    def total_points(self) -> float:
        total = 0.0
        cols = self.points.shape[1]
        for b in self.dashboard.bricks.values():
            if b.state is BrickState.PLACED:
                col = b.home[2] if b.home is not None and b.home[2] < cols else 0
                total += float(self.points[b.kind.row, col])
        return total

    def finished(self) -> bool:
        return self.dashboard.complete() or self.time >= self.config.max_sim_time - _EPS

    def step(self) -> None:
        self.scheduler.now, self.scheduler.tick = self.time, self.tick
        paused = self._stage_events()
        if paused:
            for rt in self.agents:
                rt.state = replace(rt.state, velocity=ZERO_TWIST)
        else:
            self._stage_queries()
            self._stage_control()
            self._stage_move()
            self._post_move()
            self._stage_outcomes()
        self.tick += 1
        self.time = self.tick * self.dt
        self.scheduler.now, self.scheduler.tick = self.time, self.tick
        if not paused:
            self._stage_monitor()
        self._log_agents()

    def _post_move(self) -> None:
        for rt in self.agents:
            if rt.state.mode is MissionMode.EXPLORE and rt.link_until is None:
                cam = rt.state.pose
                for found in sorted(discoveries(cam, self.config.explore_fov, self.arena)):
                    if not self.dashboard.discovered.get(found.landmark, True):
                        self.dashboard.discovered[found.landmark] = True
                        self.dashboard.touch()

    def run(self, on_tick: Callable[[Simulation], None] | None = None) -> tuple[Metrics, SimLogs]:
        while not self.finished():
            self.step()
            if on_tick is not None:
                on_tick(self)
        return self.finalize()

    def finalize(self) -> tuple[Metrics, SimLogs]:
        m = self.metrics
        m.sim_time_s = round(self.time, 9)
        m.ticks = self.tick
        m.complete = self.dashboard.complete()
        m.slots_filled = sum(s.status is SlotStatus.FILLED for s in self.dashboard.all_slots())
        m.total_points = self.total_points()
        if m.makespan_s is not None:
            m.makespan_s = round(m.makespan_s, 9)
        m.distance_m = {rt.id: round(rt.distance, 6) for rt in self.agents}
        m.fault_counts = {k.value: self.fault_counts.get(k.value, 0) for k in FaultKind}
        m.min_transit_vertical_sep = None if math.isinf(self._min_transit_sep) else self._min_transit_sep
        m.task_durations = _task_summary(self.scheduler.tasks)
        self.logs.tasks = list(self.scheduler.log)
        return m, self.logs


def _task_summary(tasks: list[Task]) -> dict:
    out = {}
    for variant in TaskVariant:
        done = [t.duration for t in tasks if t.variant is variant and t.status is TaskStatus.COMPLETED]
        failed = sum(1 for t in tasks if t.variant is variant and t.status is TaskStatus.FAILED)
        out[variant.value] = {
            "completed": len(done),
            "failed": failed,
            "mean_s": round(sum(done) / len(done), 6) if done else None,
            "max_s": round(max(done), 6) if done else None,
        }
    return out


_HANDLERS = {
    MissionMode.IDLE: Simulation._idle,
    MissionMode.EXPLORE: Simulation._explore,
    MissionMode.TRAVEL_TO_PICK: Simulation._travel_to_pick,
    MissionMode.ALIGN_OVER_BRICK: Simulation._align,
    MissionMode.DESCEND: Simulation._descend,
    MissionMode.GRIP: Simulation._grip,
    MissionMode.ASCEND: Simulation._ascend,
    MissionMode.TRAVEL_TO_PLACE: Simulation._travel_to_place,
    MissionMode.PLACE_ALIGN: Simulation._place_align,
    MissionMode.RELEASE: Simulation._release,
}


# invariants ---------------------------------------------------------------

def check_invariants(dashboard: Dashboard, scheduler: TaskScheduler) -> list[str]:
    """Dashboard and planner consistency; returns one message per breach."""
    errors = []
    picks: dict = {}
    places: dict = {}
    for t in scheduler.engaged():
        if t.variant is TaskVariant.PICK:
            picks.setdefault(t.spot, []).append(t.assigned_to)
        elif t.variant is TaskVariant.PLACE:
            places.setdefault(t.slot, []).append(t.assigned_to)
    for key, who in picks.items():
        if len(who) > 1:
            errors.append(f"spot {key} targeted by {who}")
    for key, who in places.items():
        if len(who) > 1:
            errors.append(f"slot {key} reserved by {who}")
    for spot in dashboard.spots.values():
        if spot.status is SpotStatus.TARGETED:
            if picks.get(spot.key) != [spot.targeted_by]:
                errors.append(f"spot {spot.key} targeted by {spot.targeted_by} without an engaged pick")
        elif spot.targeted_by is not None:
            errors.append(f"spot {spot.key} has a stale target {spot.targeted_by}")
    for cid, slots in dashboard.slots.items():
        layer_full: dict[int, bool] = {}
        for s in slots:
            layer_full[s.layer] = layer_full.get(s.layer, True) and s.status is SlotStatus.FILLED
            if s.status is SlotStatus.RESERVED and places.get(s.key) != [s.reserved_by]:
                errors.append(f"slot {s.key} reserved by {s.reserved_by} without an engaged place")
            if s.status is SlotStatus.FILLED:
                b = dashboard.bricks.get(s.brick_id)
                if b is None or b.state is not BrickState.PLACED or b.kind is not s.required_kind:
                    errors.append(f"slot {s.key} filled inconsistently")
        for s in slots:
            if s.layer > 0 and s.status is not SlotStatus.EMPTY and not layer_full.get(s.layer - 1, True):
                errors.append(f"layer rule: slot {s.key} used before layer {s.layer - 1} is complete")
    for ch in dashboard.channels.values():
        if ch.blocked_by is not None:
            if not any(
                t.assigned_to == ch.blocked_by and t.channel == ch.id and t.variant is TaskVariant.PLACE
                for t in scheduler.engaged(ch.blocked_by)
            ):
                errors.append(f"channel {ch.id} blocked by {ch.blocked_by} without an engaged place")
    for t in scheduler.engaged():
        if t.variant is TaskVariant.PLACE and dashboard.channels[t.channel].blocked_by != t.assigned_to:
            errors.append(f"place task {t.id} targets channel {t.channel} not blocked by its agent")
    totals = Counter(b.kind for b in dashboard.bricks.values())
    if totals != dashboard.initial_counts:
        errors.append("brick conservation broken")
    if not bool(np.all(scheduler.score > 0)):
        errors.append("score matrix has a non-positive entry")
    balance = np.zeros_like(scheduler.kernel_balance)
    for t in scheduler.engaged():
        if t.variant is TaskVariant.PICK and t.spot[0] == PileOwner.UAV.value:
            balance[t.spot[1], t.spot[2]] += 1
    if not np.array_equal(balance, scheduler.kernel_balance):
        errors.append("increase/reset kernel applications out of balance")
    return errors


# entry point ----------------------------------------------------------------

def run(
    config: SimConfig,
    scenario: Scenario,
    out_dir: str | Path | None = None,
    on_tick: Callable[[Simulation], None] | None = None,
) -> tuple[Metrics, SimLogs]:
    sim = Simulation(config, scenario)
    metrics, logs = sim.run(on_tick)
    if out_dir is not None:
        write_outputs(out_dir, metrics, logs)
    return metrics, logs


__all__ = [
    "ConfigError",
    "FaultContext",
    "Metrics",
    "ServoTrace",
    "SimConfig",
    "SimLogs",
    "Simulation",
    "Violation",
    "check_invariants",
    "collision_monitor",
    "inject_faults",
    "pick_servo_trial",
    "run",
    "uav_pick_servo",
    "write_outputs",
]
