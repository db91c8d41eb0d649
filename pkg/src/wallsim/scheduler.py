"""Mission planner: score/points matrices, cost functions, task handling and fault recovery."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .agents import ExplorationPlan
from .world import (
    BrickKind,
    BrickSlot,
    BrickState,
    Channel,
    Dashboard,
    KINDS,
    PickupSpot,
    PileOwner,
    Pose,
    Site,
    SlotStatus,
    SpotStatus,
    block_channel,
    next_required_brick,
    release_channel,
)

SCORE_SHAPE = (4, 3)
DEFAULT_POINTS = (10.0, 6.0, 4.0, 3.0)


class SchedulerError(RuntimeError):
    pass


class IndexOutOfRange(IndexError):
    pass


class NoEligibleSlot(SchedulerError):
    pass


class NoRequiredBrickAvailable(SchedulerError):
    pass


class NothingToDo(SchedulerError):
    pass


class UnknownEntity(SchedulerError):
    pass


# score and points matrices -------------------------------------------------

def new_score_matrix(shape: tuple[int, int] = SCORE_SHAPE) -> np.ndarray:
    return np.ones(shape, dtype=float)


def points_matrix(row_values: Sequence[float] = DEFAULT_POINTS, cols: int = SCORE_SHAPE[1]) -> np.ndarray:
    return np.repeat(np.asarray(row_values, dtype=float)[:, None], cols, axis=1)


def increase_kernel(row: int, col: int, shape: tuple[int, int] = SCORE_SHAPE) -> np.ndarray:
    """Multiplier: 5 at the selected cell, 3 along its row and column, 1 elsewhere."""
    rows, cols = shape
    if not (0 <= row < rows and 0 <= col < cols):
        raise IndexOutOfRange(f"cell ({row}, {col}) outside {rows}x{cols}")
    kernel = np.ones(shape, dtype=float)
    kernel[row, :] = 3.0
    kernel[:, col] = 3.0
    kernel[row, col] = 5.0
    return kernel


def increase_cost(score: np.ndarray, row: int, col: int) -> np.ndarray:
    return score * increase_kernel(row, col, score.shape)


def reset_cost(score: np.ndarray, row: int, col: int) -> np.ndarray:
    return score / increase_kernel(row, col, score.shape)


# costs -------------------------------------------------------------------

@dataclass(frozen=True)
class CostParams:
    k_tr: float = 0.2
    k_spot: float = 1.0
    k_place: float = 5.0

    def __post_init__(self) -> None:
        if min(self.k_tr, self.k_spot, self.k_place) < 0:
            raise ValueError("cost weights must be non-negative")


def travel_cost(params: CostParams, target: Sequence[float], current: Sequence[float]) -> float:
    """k_tr times the straight-line distance; pass 2-D points for ground vehicles."""
    return params.k_tr * math.dist(target, current)


# tasks -------------------------------------------------------------------

class TaskVariant(str, Enum):
    EXPLORE = "Explore"
    PICK = "Pick"
    PLACE = "Place"


class TaskStatus(str, Enum):
    ENGAGED = "Engaged"
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass
class Task:
    id: int
    variant: TaskVariant
    assigned_to: str
    status: TaskStatus = TaskStatus.ENGAGED
    spot: Optional[tuple] = None
    kind: Optional[BrickKind] = None
    slot: Optional[tuple] = None
    channel: Optional[str] = None
    plan: Optional[ExplorationPlan] = None
    created_at: float = 0.0
    finished_at: Optional[float] = None

    @property
    def duration(self) -> Optional[float]:
        return None if self.finished_at is None else self.finished_at - self.created_at


class FaultKind(str, Enum):
    CONNECTIVITY_LOSS = "ConnectivityLoss"
    PICK_FAIL = "PickFail"
    PLACE_FAIL = "PlaceFail"
    COLLISION = "Collision"
    RESET_PAUSE = "ResetPause"


@dataclass(frozen=True)
class FaultEvent:
    kind: FaultKind
    agents: tuple[str, ...] = ()
    spot: Optional[tuple] = None
    slot: Optional[tuple] = None
    duration: float = 0.0


class Action(str, Enum):
    """Recovery actions the engine applies to agents."""

    ENTER_FAULT = "enter_fault"
    DROP_PAYLOAD = "drop_payload"
    REQUERY = "requery"
    HALT_ALL = "halt_all"
    FREEZE_DASHBOARD = "freeze_dashboard"
    AWAIT_TIMEOUT = "await_timeout"


# decisions ---------------------------------------------------------------

def eligible_slots(dashboard: Dashboard, kind: BrickKind, agent: str, site: Site) -> list[tuple[BrickSlot, Channel]]:
    out = []
    for ch in dashboard.channels_at(site):
        if ch.blocked_by is not None and ch.blocked_by != agent:
            continue
        nxt = next_required_brick(dashboard, ch)
        if nxt is not None and nxt[1] is kind:
            out.append((nxt[0], ch))
    return out


def drop_cost(
    dashboard: Dashboard,
    slot: BrickSlot,
    channel: Channel,
    agent: str,
    agent_pos: Sequence[float],
    params: CostParams,
    planar: bool = False,
) -> float:
    """Placement hindrance plus travel cost for one candidate slot."""
    if channel.blocked_by is not None and channel.blocked_by != agent:
        return math.inf
    hindered = any(
        dashboard.channels[cid].blocked_by not in (None, agent) for cid in dashboard.adjacent_channels(channel.id)
    )
    placement = params.k_place * (1.0 if hindered else 0.0)
    target = slot.target_pose
    if planar:
        tr = travel_cost(params, (target.x, target.y), agent_pos[:2])
    else:
        tr = travel_cost(params, (target.x, target.y, target.z), agent_pos)
    return placement + tr


def choose_drop(
    dashboard: Dashboard,
    kind: BrickKind,
    agent: str,
    agent_pos: Sequence[float],
    params: CostParams,
    site: Site = Site.UAV,
    planar: bool = False,
) -> tuple[BrickSlot, Channel]:
    """Cheapest eligible slot for a held brick; blocks the winning channel."""
    best = None
    best_key = None
    for slot, ch in eligible_slots(dashboard, kind, agent, site):
        cost = drop_cost(dashboard, slot, ch, agent, agent_pos, params, planar)
        if not math.isfinite(cost):
            continue
        key = (cost, ch.id, slot.layer, slot.offset_m)
        if best_key is None or key < best_key:
            best, best_key = (slot, ch), key
    if best is None:
        raise NoEligibleSlot(f"no eligible slot for {kind.value} held by {agent}")
    slot, ch = best
    if ch.blocked_by != agent:
        block_channel(dashboard, ch, agent)
    slot.status = SlotStatus.RESERVED
    slot.reserved_by = agent
    dashboard.touch()
    return slot, ch


def pick_utility(
    spot: PickupSpot,
    score: Optional[np.ndarray],
    points: np.ndarray,
    agent_pos: Sequence[float],
    params: CostParams,
    planar: bool = False,
) -> float:
    r, c = spot.row, spot.col
    p = spot.pose
    if planar:
        tr = travel_cost(params, (p.x, p.y), agent_pos[:2])
    else:
        tr = travel_cost(params, (p.x, p.y, spot.top_z()), agent_pos)
    spot_cost = params.k_spot * float(score[r, c]) if score is not None else 0.0
    return float(points[r, c]) - (spot_cost + tr)


def choose_pick(
    dashboard: Dashboard,
    score: Optional[np.ndarray],
    points: np.ndarray,
    agent: str,
    agent_pos: Sequence[float],
    params: CostParams,
    required: set[BrickKind],
    owner: PileOwner = PileOwner.UAV,
    planar: bool = False,
) -> tuple[PickupSpot, BrickKind]:
    """Best free spot among required kinds; marks it targeted.

    When ``score`` is given the increase kernel is applied to it in place.
    """
    best = None
    best_u = -math.inf
    for spot in dashboard.spots_of(owner):
        if spot.status is not SpotStatus.FREE or spot.remaining == 0 or spot.kind not in required:
            continue
        u = pick_utility(spot, score, points, agent_pos, params, planar)
        if u > best_u:
            best, best_u = spot, u
    if best is None:
        raise NoRequiredBrickAvailable(f"no free spot holds a required brick for {agent}")
    best.status = SpotStatus.TARGETED
    best.targeted_by = agent
    if score is not None:
        score *= increase_kernel(best.row, best.col, score.shape)
    dashboard.touch()
    return best, best.kind


def frontier_demand(dashboard: Dashboard, site: Site) -> Counter:
    """Kinds needed right now: one per channel's next eligible slot."""
    demand: Counter = Counter()
    for ch in dashboard.channels_at(site):
        nxt = next_required_brick(dashboard, ch)
        if nxt is not None:
            demand[nxt[1]] += 1
    return demand


# task handler ------------------------------------------------------------

TASK_LOG_HEADER = ("tick", "time", "task_id", "variant", "agent", "from_status", "to_status", "detail")


class TaskScheduler:
    """Allocates tasks to free agents and tracks each one as engaged, completed or failed."""

    def __init__(
        self,
        dashboard: Dashboard,
        exploration: ExplorationPlan,
        points: np.ndarray | None = None,
        params: CostParams | None = None,
        agent_sites: dict[str, Site] | None = None,
        connectivity_timeout: float = 10.0,
    ) -> None:
        self.dashboard = dashboard
        self.exploration = exploration
        self.score = new_score_matrix()
        self.points = points_matrix() if points is None else np.asarray(points, dtype=float)
        self.params = params or CostParams()
        self.agent_sites = dict(agent_sites or {})
        self.connectivity_timeout = connectivity_timeout
        self.tasks: list[Task] = []
        self.log: list[tuple] = []
        self.kernel_balance = np.zeros(SCORE_SHAPE, dtype=int)
        self.pending_timeouts: dict[str, float] = {}
        self.paused = False
        self.now = 0.0
        self.tick = 0

    # bookkeeping ---------------------------------------------------------

    def _record(self, task: Task, before: str, detail: str = "") -> None:
        self.log.append(
            (self.tick, self.now, task.id, task.variant.value, task.assigned_to, before, task.status.value, detail)
        )

    def _new_task(self, variant: TaskVariant, agent: str, **kw) -> Task:
        task = Task(len(self.tasks), variant, agent, created_at=self.now, **kw)
        self.tasks.append(task)
        self._record(task, "", _detail(task))
        return task

    def _finish(self, task: Task, status: TaskStatus, detail: str = "") -> None:
        if task.status is not TaskStatus.ENGAGED:
            return
        task.status = status
        task.finished_at = self.now
        self._record(task, TaskStatus.ENGAGED.value, detail)

    def engaged(self, agent: str | None = None) -> list[Task]:
        return [
            t for t in self.tasks if t.status is TaskStatus.ENGAGED and (agent is None or t.assigned_to == agent)
        ]

    def site_of(self, agent: str) -> Site:
        try:
            return self.agent_sites[agent]
        except KeyError:
            raise UnknownEntity(f"unknown agent {agent!r}") from None

    def is_ground(self, agent: str) -> bool:
        return self.site_of(agent) is Site.UGV

    def in_flight(self, site: Site) -> Counter:
        """Bricks being fetched or carried that have no slot reserved yet."""
        counts: Counter = Counter()
        dash = self.dashboard
        reserved_agents = {t.assigned_to for t in self.engaged() if t.variant is TaskVariant.PLACE}
        for t in self.engaged():
            if t.variant is TaskVariant.PICK and self.site_of(t.assigned_to) is site:
                counts[t.kind] += 1
        for b in dash.bricks.values():
            if b.state is BrickState.HELD and b.where not in reserved_agents:
                if self.agent_sites.get(b.where) is site:
                    counts[b.kind] += 1
        return counts

    def required_kinds(self, site: Site) -> set[BrickKind]:
        demand = frontier_demand(self.dashboard, site)
        flying = self.in_flight(site)
        return {k for k in KINDS if demand[k] > flying[k]}

    # allocation ----------------------------------------------------------

    def allocate_task(self, agent: str, agent_pos: Sequence[float]) -> Optional[Task]:
        """Task for a free agent, or None when it should wait and ask again."""
        site = self.site_of(agent)
        if self.engaged(agent):
            raise SchedulerError(f"agent {agent} already has an engaged task")
        dash = self.dashboard
        exploring = not self._exploration_done()
        if not dash.all_discovered():
            if site is Site.UAV and not exploring:
                return self._new_task(TaskVariant.EXPLORE, agent, plan=self.exploration)
            return None
        if exploring:
            return None
        if dash.site_complete(site):
            raise NothingToDo(f"{site.value} complete")
        ground = site is Site.UGV
        owner = PileOwner.UGV if ground else PileOwner.UAV
        try:
            spot, kind = choose_pick(
                dash,
                None if ground else self.score,
                self.points,
                agent,
                agent_pos,
                self.params,
                self.required_kinds(site),
                owner,
                planar=ground,
            )
        except NoRequiredBrickAvailable:
            return None
        if not ground:
            self.kernel_balance[spot.row, spot.col] += 1
        return self._new_task(TaskVariant.PICK, agent, spot=spot.key, kind=kind)

    def _exploration_done(self) -> bool:
        return not any(t.variant is TaskVariant.EXPLORE for t in self.engaged())

    def complete_explore(self, task: Task) -> None:
        self._finish(task, TaskStatus.COMPLETED)

    def _release_spot(self, task: Task) -> None:
        spot = self.dashboard.spots.get(task.spot)
        if spot is None or spot.targeted_by != task.assigned_to:
            return
        spot.targeted_by = None
        spot.status = SpotStatus.FREE if spot.stack else SpotStatus.DEPLETED
        if spot.owner is PileOwner.UAV:
            self.score = reset_cost(self.score, spot.row, spot.col)
            self.kernel_balance[spot.row, spot.col] -= 1
        self.dashboard.touch()

    def complete_pick(self, task: Task, agent_pos: Sequence[float]) -> Optional[Task]:
        """Close a pick after a confirmed grip and try to issue its place task."""
        self._release_spot(task)
        self._finish(task, TaskStatus.COMPLETED)
        return self.request_place(task.assigned_to, task.kind, agent_pos)

    def request_place(self, agent: str, kind: BrickKind, agent_pos: Sequence[float]) -> Optional[Task]:
        site = self.site_of(agent)
        try:
            slot, ch = choose_drop(
                self.dashboard, kind, agent, agent_pos, self.params, site, planar=site is Site.UGV
            )
        except NoEligibleSlot:
            return None
        return self._new_task(TaskVariant.PLACE, agent, slot=slot.key, channel=ch.id, kind=kind)

    def complete_place(self, task: Task, brick_id: int, pose: Pose | None = None) -> None:
        dash = self.dashboard
        slot = dash.slot(task.slot)
        dash.place_brick(brick_id, slot, pose)
        ch = dash.channels[task.channel]
        if ch.blocked_by == task.assigned_to:
            release_channel(dash, ch, task.assigned_to)
        self._finish(task, TaskStatus.COMPLETED)

    # faults --------------------------------------------------------------

    def release_resources(self, agent: str, detail: str) -> list[Task]:
        """Fail every engaged task of ``agent`` and free what it held."""
        failed = []
        dash = self.dashboard
        for task in self.engaged(agent):
            if task.variant is TaskVariant.PICK:
                self._release_spot(task)
            elif task.variant is TaskVariant.PLACE:
                slot = dash.slot(task.slot)
                if slot.status is SlotStatus.RESERVED and slot.reserved_by == agent:
                    slot.status = SlotStatus.EMPTY
                    slot.reserved_by = None
            self._finish(task, TaskStatus.FAILED, detail)
            failed.append(task)
        for ch in dash.channels.values():
            if ch.blocked_by == agent:
                release_channel(dash, ch, agent)
        dash.touch()
        return failed

    def handle_fault(self, event: FaultEvent) -> list[tuple[Action, Optional[str]]]:
        """Update tasks and the dashboard for a fault; return agent-level actions."""
        for a in event.agents:
            self.site_of(a)
        if event.spot is not None and event.spot not in self.dashboard.spots:
            raise UnknownEntity(f"unknown spot {event.spot!r}")
        if event.slot is not None:
            try:
                self.dashboard.slot(event.slot)
            except (KeyError, ValueError):
                raise UnknownEntity(f"unknown slot {event.slot!r}") from None
        kind = event.kind
        actions: list[tuple[Action, Optional[str]]] = []
        if kind is FaultKind.PICK_FAIL:
            (agent,) = event.agents
            self.release_resources(agent, kind.value)
            actions += [(Action.ENTER_FAULT, agent), (Action.REQUERY, agent)]
        elif kind is FaultKind.PLACE_FAIL:
            (agent,) = event.agents
            self.release_resources(agent, kind.value)
            actions += [(Action.DROP_PAYLOAD, agent), (Action.ENTER_FAULT, agent), (Action.REQUERY, agent)]
        elif kind is FaultKind.COLLISION:
            for agent in event.agents:
                self.release_resources(agent, kind.value)
                actions += [(Action.DROP_PAYLOAD, agent), (Action.ENTER_FAULT, agent)]
        elif kind is FaultKind.CONNECTIVITY_LOSS:
            (agent,) = event.agents
            # the agent hovers in place; its tasks only fail if the link stays down
            self.pending_timeouts.setdefault(agent, self.now + self.connectivity_timeout)
            actions += [(Action.AWAIT_TIMEOUT, agent)]
        elif kind is FaultKind.RESET_PAUSE:
            self.paused = True
            self.dashboard.frozen = True
            actions += [(Action.HALT_ALL, None), (Action.FREEZE_DASHBOARD, None)]
        return actions

    def reconnect(self, agent: str) -> bool:
        """Link restored; True when this cancelled a pending timeout."""
        return self.pending_timeouts.pop(agent, None) is not None

    def resume(self) -> None:
        self.paused = False
        self.dashboard.frozen = False

    def expire_timeouts(self) -> list[str]:
        """Agents whose connectivity timeout elapsed; their resources are released."""
        due = sorted(a for a, t in self.pending_timeouts.items() if self.now >= t - 1e-9)
        for agent in due:
            del self.pending_timeouts[agent]
            self.release_resources(agent, FaultKind.CONNECTIVITY_LOSS.value)
        return due


def _detail(task: Task) -> str:
    if task.variant is TaskVariant.PICK:
        return f"spot={task.spot[1]}:{task.spot[2]} kind={task.kind.value}"
    if task.variant is TaskVariant.PLACE:
        return f"slot={task.slot[0]}:{task.slot[1]}:{task.slot[2]} kind={task.kind.value}"
    return ""
