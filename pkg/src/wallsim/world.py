"""Arena, bricks, piles, channels and the shared dashboard."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple, Optional

BRICK_WIDTH = 0.20
BRICK_HEIGHT = 0.20
CHANNEL_LENGTH = 4.0
UAV_PLATFORM_HEIGHT = 1.7

_EPS = 1e-9


class WorldError(ValueError):
    pass


class LayerOverflow(WorldError):
    pass


class ReservedKindViolation(WorldError):
    pass


class AlreadyBlocked(WorldError):
    pass


class NotOwner(WorldError):
    pass


class IllegalBrickTransition(WorldError):
    pass


class BrickKind(str, Enum):
    RED = "Red"
    GREEN = "Green"
    BLUE = "Blue"
    ORANGE = "Orange"

    @property
    def length_m(self) -> float:
        return _BRICK_TABLE[self][0]

    @property
    def width_m(self) -> float:
        return BRICK_WIDTH

    @property
    def height_m(self) -> float:
        return BRICK_HEIGHT

    @property
    def mass_kg(self) -> float:
        return _BRICK_TABLE[self][1]

    @property
    def row(self) -> int:
        """Row of this kind in the 4x3 pile, score and points matrices."""
        return _KIND_ORDER.index(self)

    @classmethod
    def parse(cls, value: str | BrickKind) -> BrickKind:
        if isinstance(value, BrickKind):
            return value
        for kind in cls:
            if kind.value.lower() == str(value).strip().lower():
                return kind
        raise ValueError(f"unknown brick colour {value!r}")


# length (m), mass (kg)
_BRICK_TABLE = {
    BrickKind.RED: (0.30, 1.0),
    BrickKind.GREEN: (0.60, 1.0),
    BrickKind.BLUE: (1.20, 1.5),
    BrickKind.ORANGE: (1.80, 2.0),
}
_KIND_ORDER = (BrickKind.RED, BrickKind.GREEN, BrickKind.BLUE, BrickKind.ORANGE)
KINDS = _KIND_ORDER


class Pose(NamedTuple):
    x: float
    y: float
    z: float = 0.0
    yaw: float = 0.0


def wrap_pi(angle: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(angle + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def wrap_half_pi(angle: float) -> float:
    """Wrap to (-pi/2, pi/2]; an axis direction is ambiguous by pi."""
    a = math.fmod(angle + 0.5 * math.pi, math.pi)
    if a <= 0.0:
        a += math.pi
    return a - 0.5 * math.pi


class BrickState(str, Enum):
    IN_PILE = "InPile"
    HELD = "Held"
    PLACED = "Placed"
    DROPPED = "Dropped"


_BRICK_EDGES = {
    (BrickState.IN_PILE, BrickState.HELD),
    (BrickState.HELD, BrickState.PLACED),
    (BrickState.HELD, BrickState.DROPPED),
    (BrickState.DROPPED, BrickState.IN_PILE),
}


@dataclass(slots=True)
class BrickInstance:
    id: int
    kind: BrickKind
    pose: Pose
    state: BrickState
    # spot key, agent id or slot key depending on ``state``
    where: object = None
    home: Optional[tuple] = None

    def transition(self, state: BrickState, where: object = None, pose: Pose | None = None) -> None:
        if (self.state, state) not in _BRICK_EDGES:
            raise IllegalBrickTransition(f"brick {self.id}: {self.state.value} -> {state.value}")
        self.state = state
        self.where = where
        if pose is not None:
            self.pose = pose


class PileOwner(str, Enum):
    UAV = "UavPile"
    UGV = "UgvPile"


class SpotStatus(str, Enum):
    FREE = "Free"
    TARGETED = "Targeted"
    DEPLETED = "Depleted"


@dataclass(slots=True)
class PickupSpot:
    row: int
    col: int
    pose: Pose
    owner: PileOwner
    kind: BrickKind
    stacked: bool = True
    status: SpotStatus = SpotStatus.FREE
    targeted_by: Optional[str] = None
    stack: list[int] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.owner.value, self.row, self.col)

    @property
    def remaining(self) -> int:
        return len(self.stack)

    def brick_z(self, level: int) -> float:
        if not self.stacked:
            return self.pose.z + 0.5 * BRICK_HEIGHT
        return self.pose.z + level * BRICK_HEIGHT + 0.5 * BRICK_HEIGHT

    def top_z(self) -> float:
        """Height of the top face of the topmost brick (ground level if empty)."""
        if not self.stack:
            return self.pose.z
        return self.brick_z(len(self.stack) - 1) + 0.5 * BRICK_HEIGHT


class Site(str, Enum):
    UAV = "UavSite"
    UGV = "UgvSite"


@dataclass(slots=True)
class Channel:
    id: str
    origin: tuple[float, float, float]
    heading: float
    site: Site
    length_m: float = CHANNEL_LENGTH
    reserved_kind: Optional[BrickKind] = None
    blocked_by: Optional[str] = None
    # +1: vehicles service the wall from the left of the heading, -1 from the right
    approach_side: int = -1

    def point_at(self, along: float, z: float | None = None) -> tuple[float, float, float]:
        ox, oy, oz = self.origin
        return (
            ox + along * math.cos(self.heading),
            oy + along * math.sin(self.heading),
            oz if z is None else z,
        )


@dataclass(frozen=True, slots=True)
class WallSpec:
    layers: tuple[tuple[BrickKind, ...], ...] = ()

    @classmethod
    def of(cls, layers: Iterable[Iterable[BrickKind | str]]) -> WallSpec:
        return cls(tuple(tuple(BrickKind.parse(k) for k in layer) for layer in layers))

    @property
    def brick_count(self) -> int:
        return sum(len(layer) for layer in self.layers)


class SlotStatus(str, Enum):
    EMPTY = "Empty"
    RESERVED = "Reserved"
    FILLED = "Filled"


@dataclass(slots=True)
class BrickSlot:
    channel_id: str
    layer: int
    index: int
    offset_m: float
    target_pose: Pose
    required_kind: BrickKind
    status: SlotStatus = SlotStatus.EMPTY
    reserved_by: Optional[str] = None
    brick_id: Optional[int] = None

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.channel_id, self.layer, self.index)

    @property
    def end_m(self) -> float:
        return self.offset_m + self.required_kind.length_m


def wall_slots(spec: WallSpec, channel: Channel) -> list[BrickSlot]:
    """Expand a channel's layer pattern into world-frame brick slots.

    Bricks are laid end to end from the channel origin with no gap. Slot
    centres sit half a brick height above the top of the layer below.
    """
    slots: list[BrickSlot] = []
    ox, oy, oz = channel.origin
    c, s = math.cos(channel.heading), math.sin(channel.heading)
    for layer_idx, layer in enumerate(spec.layers):
        total = sum(kind.length_m for kind in layer)
        if total > channel.length_m + _EPS:
            raise LayerOverflow(
                f"channel {channel.id} layer {layer_idx}: {total:.2f} m exceeds {channel.length_m:.2f} m"
            )
        z = oz + layer_idx * BRICK_HEIGHT + 0.5 * BRICK_HEIGHT
        offset = 0.0
        for idx, kind in enumerate(layer):
            if channel.reserved_kind is not None and kind is not channel.reserved_kind:
                raise ReservedKindViolation(
                    f"channel {channel.id} is reserved for {channel.reserved_kind.value}, got {kind.value}"
                )
            along = offset + 0.5 * kind.length_m
            pose = Pose(ox + along * c, oy + along * s, z, channel.heading)
            slots.append(BrickSlot(channel.id, layer_idx, idx, offset, pose, kind))
            offset += kind.length_m
    return slots


@dataclass
class Arena:
    xmin: float = 0.0
    ymin: float = 0.0
    zmin: float = 0.0
    xmax: float = 50.0
    ymax: float = 40.0
    zmax: float = 20.0
    # landmark name -> ground position used for discovery
    landmarks: dict[str, tuple[float, float]] = field(default_factory=dict)
    # name -> (xmin, ymin, xmax, ymax) service zones around piles and sites
    zones: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)

    @property
    def size(self) -> tuple[float, float, float]:
        return (self.xmax - self.xmin, self.ymax - self.ymin, self.zmax - self.zmin)

    def contains(self, x: float, y: float, z: float = 0.0) -> bool:
        return (
            self.xmin - _EPS <= x <= self.xmax + _EPS
            and self.ymin - _EPS <= y <= self.ymax + _EPS
            and self.zmin - _EPS <= z <= self.zmax + _EPS
        )

    def clamp(self, x: float, y: float, z: float) -> tuple[float, float, float]:
        return (
            min(max(x, self.xmin), self.xmax),
            min(max(y, self.ymin), self.ymax),
            min(max(z, self.zmin), self.zmax),
        )

    def zone_of(self, x: float, y: float) -> Optional[str]:
        for name, (x0, y0, x1, y1) in self.zones.items():
            if x0 <= x <= x1 and y0 <= y <= y1:
                return name
        return None


LANDMARKS = ("uav_pile", "uav_site", "ugv_pile", "ugv_site")


class Dashboard:
    """Live registry of pickup spots, placement slots, channels and bricks.

    All mutations go through the simulation's single update path; ``revision``
    increments on each one so observers can cheaply detect change.
    """

    def __init__(
        self,
        spots: Iterable[PickupSpot],
        channels: Iterable[Channel],
        specs: dict[str, WallSpec],
        bricks: Iterable[BrickInstance],
        landmarks: Iterable[str] = LANDMARKS,
    ) -> None:
        self.spots: dict[tuple, PickupSpot] = {s.key: s for s in spots}
        self.channels: dict[str, Channel] = {c.id: c for c in channels}
        self.specs = dict(specs)
        self.slots: dict[str, list[BrickSlot]] = {
            cid: wall_slots(self.specs.get(cid, WallSpec()), ch) for cid, ch in self.channels.items()
        }
        self.bricks: dict[int, BrickInstance] = {b.id: b for b in bricks}
        self.discovered: dict[str, bool] = {name: False for name in landmarks}
        self.initial_counts: Counter = Counter(b.kind for b in self.bricks.values())
        self.revision = 0
        self.frozen = False
        self._adjacent = self._build_adjacency()

    def _build_adjacency(self) -> dict[str, tuple[str, ...]]:
        adjacency: dict[str, tuple[str, ...]] = {}
        for site in Site:
            ids = [cid for cid, ch in self.channels.items() if ch.site is site]
            for i, cid in enumerate(ids):
                adjacency[cid] = tuple(ids[j] for j in (i - 1, i + 1) if 0 <= j < len(ids))
        return adjacency

    def touch(self) -> None:
        self.revision += 1

    def adjacent_channels(self, channel_id: str) -> tuple[str, ...]:
        return self._adjacent.get(channel_id, ())

    def channels_at(self, site: Site) -> list[Channel]:
        return [ch for ch in self.channels.values() if ch.site is site]

    def spots_of(self, owner: PileOwner) -> list[PickupSpot]:
        return sorted((s for s in self.spots.values() if s.owner is owner), key=lambda s: (s.row, s.col))

    def slot(self, key: tuple[str, int, int]) -> BrickSlot:
        channel_id, layer, index = key
        for slot in self.slots[channel_id]:
            if slot.layer == layer and slot.index == index:
                return slot
        raise KeyError(key)

    def all_slots(self, site: Site | None = None) -> list[BrickSlot]:
        out = []
        for cid, slots in self.slots.items():
            if site is None or self.channels[cid].site is site:
                out.extend(slots)
        return out

    def site_complete(self, site: Site) -> bool:
        return all(s.status is SlotStatus.FILLED for s in self.all_slots(site))

    def complete(self) -> bool:
        return all(s.status is SlotStatus.FILLED for s in self.all_slots())

    def all_discovered(self) -> bool:
        return all(self.discovered.values())

    def top_brick(self, spot: PickupSpot) -> Optional[BrickInstance]:
        return self.bricks[spot.stack[-1]] if spot.stack else None

    def counts_by_state(self) -> dict[BrickKind, Counter]:
        out: dict[BrickKind, Counter] = {k: Counter() for k in KINDS}
        for b in self.bricks.values():
            out[b.kind][b.state] += 1
        return out

    # brick lifecycle -----------------------------------------------------

    def take_top(self, spot: PickupSpot, agent_id: str) -> BrickInstance:
        brick = self.bricks[spot.stack.pop()]
        brick.transition(BrickState.HELD, agent_id)
        if not spot.stack and spot.status is SpotStatus.FREE:
            spot.status = SpotStatus.DEPLETED
        self.touch()
        return brick

    def drop_brick(self, brick_id: int, pose: Pose) -> BrickInstance:
        brick = self.bricks[brick_id]
        brick.transition(BrickState.DROPPED, None, pose)
        self.touch()
        return brick

    def recover_brick(self, brick_id: int) -> PickupSpot:
        """Return a dropped brick to the top of its home stack."""
        brick = self.bricks[brick_id]
        spot = self.spots[brick.home]
        level = len(spot.stack)
        pose = Pose(spot.pose.x, spot.pose.y, spot.brick_z(level), spot.pose.yaw)
        brick.transition(BrickState.IN_PILE, spot.key, pose)
        spot.stack.append(brick_id)
        if spot.status is SpotStatus.DEPLETED:
            spot.status = SpotStatus.FREE
        self.touch()
        return spot

    def place_brick(self, brick_id: int, slot: BrickSlot, pose: Pose | None = None) -> None:
        brick = self.bricks[brick_id]
        brick.transition(BrickState.PLACED, slot.key, pose if pose is not None else slot.target_pose)
        slot.status = SlotStatus.FILLED
        slot.reserved_by = None
        slot.brick_id = brick_id
        self.touch()


def next_required_brick(dashboard: Dashboard, channel: Channel) -> Optional[tuple[BrickSlot, BrickKind]]:
    """Lowest slot that is neither filled nor reserved.

    Layer n+1 only becomes eligible once every slot of layer n is filled.
    """
    slots = dashboard.slots.get(channel.id, [])
    current_layer = None
    for slot in slots:
        if slot.status is SlotStatus.FILLED:
            continue
        if current_layer is None:
            current_layer = slot.layer
        if slot.layer != current_layer:
            return None
        if slot.status is SlotStatus.EMPTY:
            return slot, slot.required_kind
    return None


def block_channel(dashboard: Dashboard, channel: Channel, agent: str) -> None:
    if channel.blocked_by is not None and channel.blocked_by != agent:
        raise AlreadyBlocked(f"channel {channel.id} is blocked by {channel.blocked_by}")
    if channel.blocked_by == agent:
        raise AlreadyBlocked(f"channel {channel.id} is already blocked by {agent}")
    channel.blocked_by = agent
    dashboard.touch()


def release_channel(dashboard: Dashboard, channel: Channel, agent: str) -> None:
    if channel.blocked_by != agent:
        raise NotOwner(f"channel {channel.id} is blocked by {channel.blocked_by}, not {agent}")
    channel.blocked_by = None
    dashboard.touch()


def build_pile(
    owner: PileOwner,
    origin: tuple[float, float],
    yaw: float,
    counts: list[list[int]],
    row_spacing: float,
    col_spacing: float,
    first_brick_id: int = 0,
    stacked: bool = True,
    brick_yaw: float | None = None,
) -> tuple[list[PickupSpot], list[BrickInstance]]:
    """Lay out a pile as kind-rows by array-columns.

    ``counts[row][col]`` is the number of bricks initially at that spot.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    byaw = yaw if brick_yaw is None else brick_yaw
    spots: list[PickupSpot] = []
    bricks: list[BrickInstance] = []
    next_id = first_brick_id
    for row, row_counts in enumerate(counts):
        kind = KINDS[row]
        for col, n in enumerate(row_counts):
            lx, ly = col * col_spacing, row * row_spacing
            pose = Pose(origin[0] + c * lx - s * ly, origin[1] + s * lx + c * ly, 0.0, byaw)
            spot = PickupSpot(row, col, pose, owner, kind, stacked=stacked)
            for level in range(n):
                bpose = Pose(pose.x, pose.y, spot.brick_z(level), byaw)
                bricks.append(BrickInstance(next_id, kind, bpose, BrickState.IN_PILE, spot.key, spot.key))
                spot.stack.append(next_id)
                next_id += 1
            if n == 0:
                spot.status = SpotStatus.DEPLETED
            spots.append(spot)
    return spots, bricks
