"""Scenario files: arena, piles, wall layouts, agents and scripted events.

A scenario is a JSON object::

    {
      "name": "...",
      "arena": {"size": [50, 40, 20]},
      "uav_pile": {"origin": [x, y], "yaw": 0, "row_spacing": 3, "col_spacing": 3,
                   "columns": 3, "bricks_per_spot": 10},
      "ugv_pile": {...same keys, "stacked": false},
      "channels": [{"id": "A1", "site": "uav", "origin": [x, y, z], "heading": 0,
                    "length": 4.0, "reserved_kind": null, "layers": [["Red", "Green"]]}],
      "agents": [{"id": "uav1", "kind": "uav", "start": [x, y, z, yaw]}],
      "points": [10, 6, 4, 3],
      "scripted_events": [{"type": "ResetPause", "t": 30.0, "duration": 5.0}]
    }
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional

from .agents import AgentKind
from .world import (
    BRICK_HEIGHT,
    KINDS,
    Arena,
    BrickKind,
    Channel,
    Dashboard,
    PileOwner,
    Pose,
    Site,
    WallSpec,
    WorldError,
    build_pile,
    wall_slots,
)


class ScenarioError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None, source: str | None = None):
        self.field = field
        self.line = line
        self.source = source
        where = []
        if source:
            where.append(str(source))
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(field)
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass
class PileConfig:
    owner: PileOwner
    origin: tuple[float, float]
    yaw: float = 0.0
    brick_yaw: Optional[float] = None
    row_spacing: float = 3.0
    col_spacing: float = 3.0
    counts: list[list[int]] = field(default_factory=list)
    stacked: bool = True
    # side from which ground vehicles approach each spot, as a heading
    approach_heading: float = 0.0
    approach_distance: float = 4.0


@dataclass
class ChannelConfig:
    id: str
    site: Site
    origin: tuple[float, float, float]
    heading: float
    spec: WallSpec
    length: float = 4.0
    reserved_kind: Optional[BrickKind] = None
    approach_side: int = -1

    def channel(self) -> Channel:
        return Channel(
            self.id,
            self.origin,
            self.heading,
            self.site,
            self.length,
            self.reserved_kind,
            approach_side=self.approach_side,
        )


@dataclass
class AgentConfig:
    id: str
    kind: AgentKind
    start: Pose


@dataclass
class ScriptedEvent:
    type: str
    t: float
    duration: float = 0.0


@dataclass
class Scenario:
    name: str
    arena: Arena
    channels: list[ChannelConfig]
    agents: list[AgentConfig]
    uav_pile: Optional[PileConfig] = None
    ugv_pile: Optional[PileConfig] = None
    points: tuple[float, ...] = (10.0, 6.0, 4.0, 3.0)
    scripted_events: list[ScriptedEvent] = field(default_factory=list)
    source: Any = None


# parsing -----------------------------------------------------------------

def _num(data: dict, key: str, path: str, default=None, positive=False) -> float:
    if key not in data:
        if default is None:
            raise ScenarioError("missing required number", f"{path}.{key}")
        return default
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"expected a finite number, got {value!r}", f"{path}.{key}")
    if positive and value <= 0:
        raise ScenarioError(f"must be positive, got {value!r}", f"{path}.{key}")
    return float(value)


def _vec(data: dict, key: str, path: str, n: int, default=None) -> tuple[float, ...]:
    if key not in data:
        if default is None:
            raise ScenarioError(f"missing required {n}-vector", f"{path}.{key}")
        return tuple(default)
    value = data[key]
    if not isinstance(value, (list, tuple)) or len(value) != n:
        raise ScenarioError(f"expected a list of {n} numbers, got {value!r}", f"{path}.{key}")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(f"expected a number, got {v!r}", f"{path}.{key}[{i}]")
        out.append(float(v))
    return tuple(out)


def _kind(value: Any, path: str) -> BrickKind:
    try:
        return BrickKind.parse(value)
    except ValueError:
        names = ", ".join(k.value for k in KINDS)
        raise ScenarioError(f"unknown brick colour {value!r} (expected one of {names})", path) from None


def _parse_pile(data: Any, owner: PileOwner, path: str) -> PileConfig:
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", path)
    ugv = owner is PileOwner.UGV
    columns = int(_num(data, "columns", path, 1.0 if ugv else 3.0, positive=True))
    if "counts" in data:
        counts = data["counts"]
        if (
            not isinstance(counts, list)
            or len(counts) != len(KINDS)
            or not all(isinstance(r, list) and len(r) == columns for r in counts)
        ):
            raise ScenarioError(f"expected a {len(KINDS)}x{columns} list of counts", f"{path}.counts")
        for r, row in enumerate(counts):
            for c, v in enumerate(row):
                if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                    raise ScenarioError(f"expected a non-negative integer, got {v!r}", f"{path}.counts[{r}][{c}]")
        counts = [list(r) for r in counts]
    else:
        n = _num(data, "bricks_per_spot", path, 10.0)
        if n < 0 or n != int(n):
            raise ScenarioError("expected a non-negative integer", f"{path}.bricks_per_spot")
        counts = [[int(n)] * columns for _ in KINDS]
    yaw = _num(data, "yaw", path, 0.0)
    brick_yaw = _num(data, "brick_yaw", path, yaw + (math.pi / 2 if ugv else 0.0))
    stacked = data.get("stacked", not ugv)
    if not isinstance(stacked, bool):
        raise ScenarioError("expected true or false", f"{path}.stacked")
    return PileConfig(
        owner,
        _vec(data, "origin", path, 2),
        yaw,
        brick_yaw,
        _num(data, "row_spacing", path, 3.0, positive=True),
        _num(data, "col_spacing", path, 3.0, positive=True),
        counts,
        stacked,
        _num(data, "approach_heading", path, 0.0),
        _num(data, "approach_distance", path, 4.0, positive=True),
    )


def _parse_channel(data: Any, path: str) -> ChannelConfig:
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", path)
    cid = data.get("id")
    if not isinstance(cid, str) or not cid:
        raise ScenarioError("expected a non-empty string id", f"{path}.id")
    site_name = str(data.get("site", "")).lower()
    if site_name not in ("uav", "ugv"):
        raise ScenarioError(f"site must be 'uav' or 'ugv', got {data.get('site')!r}", f"{path}.site")
    site = Site.UAV if site_name == "uav" else Site.UGV
    reserved = data.get("reserved_kind")
    reserved_kind = None if reserved is None else _kind(reserved, f"{path}.reserved_kind")
    layers = data.get("layers")
    if not isinstance(layers, list) or not all(isinstance(layer, list) for layer in layers):
        raise ScenarioError("expected a list of layers, each a list of colours", f"{path}.layers")
    spec = WallSpec(
        tuple(
            tuple(_kind(k, f"{path}.layers[{i}][{j}]") for j, k in enumerate(layer)) for i, layer in enumerate(layers)
        )
    )
    default_origin_z = 1.7 if site is Site.UAV else 0.0
    origin = data.get("origin")
    if isinstance(origin, list) and len(origin) == 2:
        data = dict(data, origin=[*origin, default_origin_z])
    side = str(data.get("approach_side", "right")).lower()
    if side not in ("left", "right"):
        raise ScenarioError(f"approach_side must be 'left' or 'right', got {side!r}", f"{path}.approach_side")
    cfg = ChannelConfig(
        cid,
        site,
        _vec(data, "origin", path, 3),
        _num(data, "heading", path, 0.0),
        spec,
        _num(data, "length", path, 4.0, positive=True),
        reserved_kind,
        1 if side == "left" else -1,
    )
    try:
        wall_slots(cfg.spec, cfg.channel())
    except WorldError as exc:
        raise ScenarioError(str(exc), f"{path}.layers") from None
    return cfg


def _parse_agent(data: Any, path: str) -> AgentConfig:
    if not isinstance(data, dict):
        raise ScenarioError("expected an object", path)
    aid = data.get("id")
    if not isinstance(aid, str) or not aid:
        raise ScenarioError("expected a non-empty string id", f"{path}.id")
    kind = str(data.get("kind", "")).lower()
    if kind not in ("uav", "ugv"):
        raise ScenarioError(f"kind must be 'uav' or 'ugv', got {data.get('kind')!r}", f"{path}.kind")
    start = _vec(data, "start", path, 4)
    return AgentConfig(aid, AgentKind(kind), Pose(*start))


def parse_scenario(data: Any, source: Any = None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object", source=source)
    try:
        return _parse(data, source)
    except ScenarioError as exc:
        if exc.source is None and source is not None:
            raise ScenarioError(str(exc), source=source) from None
        raise


def _parse(data: dict, source: Any) -> Scenario:
    arena_data = data.get("arena", {})
    if not isinstance(arena_data, dict):
        raise ScenarioError("expected an object", "arena")
    sx, sy, sz = _vec(arena_data, "size", "arena", 3, (50.0, 40.0, 20.0))
    if min(sx, sy, sz) <= 0:
        raise ScenarioError("arena dimensions must be positive", "arena.size")
    arena = Arena(0.0, 0.0, 0.0, sx, sy, sz)

    uav_pile = _parse_pile(data["uav_pile"], PileOwner.UAV, "uav_pile") if "uav_pile" in data else None
    ugv_pile = _parse_pile(data["ugv_pile"], PileOwner.UGV, "ugv_pile") if "ugv_pile" in data else None

    raw_channels = data.get("channels")
    if not isinstance(raw_channels, list) or not raw_channels:
        raise ScenarioError("expected a non-empty list", "channels")
    channels = [_parse_channel(c, f"channels[{i}]") for i, c in enumerate(raw_channels)]
    ids = [c.id for c in channels]
    for i, cid in enumerate(ids):
        if cid in ids[:i]:
            raise ScenarioError(f"duplicate channel id {cid!r}", f"channels[{i}].id")

    raw_agents = data.get("agents")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise ScenarioError("expected a non-empty list", "agents")
    agents = [_parse_agent(a, f"agents[{i}]") for i, a in enumerate(raw_agents)]
    aids = [a.id for a in agents]
    for i, aid in enumerate(aids):
        if aid in aids[:i]:
            raise ScenarioError(f"duplicate agent id {aid!r}", f"agents[{i}].id")

    points = tuple(_vec(data, "points", "", len(KINDS), (10.0, 6.0, 4.0, 3.0))) if "points" in data else (
        10.0,
        6.0,
        4.0,
        3.0,
    )
    if min(points) <= 0:
        raise ScenarioError("points must be positive", "points")

    events = []
    for i, ev in enumerate(data.get("scripted_events", [])):
        path = f"scripted_events[{i}]"
        if not isinstance(ev, dict):
            raise ScenarioError("expected an object", path)
        etype = ev.get("type")
        if etype != "ResetPause":
            raise ScenarioError(f"unsupported scripted event {etype!r}", f"{path}.type")
        t = _num(ev, "t", path)
        dur = _num(ev, "duration", path, 5.0)
        if t < 0 or dur < 0:
            raise ScenarioError("time and duration must be non-negative", path)
        events.append(ScriptedEvent(etype, t, dur))

    scenario = Scenario(
        str(data.get("name", "scenario")), arena, channels, agents, uav_pile, ugv_pile, points, events, source
    )
    _check_consistency(scenario)
    return scenario


def _check_consistency(sc: Scenario) -> None:
    arena = sc.arena
    for i, a in enumerate(sc.agents):
        if not arena.contains(a.start.x, a.start.y, a.start.z):
            raise ScenarioError("start pose outside arena bounds", f"agents[{i}].start")
    for i, ch in enumerate(sc.channels):
        c = ch.channel()
        for along in (0.0, c.length_m):
            if not arena.contains(*c.point_at(along)):
                raise ScenarioError("channel extends outside arena bounds", f"channels[{i}]")
    kinds_needed = {
        Site.UAV: any(a.kind is AgentKind.UAV for a in sc.agents),
        Site.UGV: any(a.kind is AgentKind.UGV for a in sc.agents),
    }
    for site, pile, name in ((Site.UAV, sc.uav_pile, "uav_pile"), (Site.UGV, sc.ugv_pile, "ugv_pile")):
        site_channels = [c for c in sc.channels if c.site is site]
        if site_channels and not kinds_needed[site]:
            raise ScenarioError(f"channels at {site.value} but no {site.name} agent", "agents")
        if site_channels and pile is None:
            raise ScenarioError(f"required when {site.value} channels exist", name)
        if site is Site.UGV and kinds_needed[site] and not site_channels:
            raise ScenarioError("a UGV is present but there are no UGV channels", "channels")
        if pile is None or not site_channels:
            continue
        if site is Site.UAV and not kinds_needed[site]:
            continue
        demand = {k: 0 for k in KINDS}
        for c in site_channels:
            for layer in c.spec.layers:
                for k in layer:
                    demand[k] += 1
        for k in KINDS:
            have = sum(pile.counts[k.row])
            if have < demand[k]:
                raise ScenarioError(f"{have} {k.value} bricks cannot fill {demand[k]} slots", f"{name}.counts")
        spots, _ = _pile_world(pile)
        for s in spots:
            if not arena.contains(s.pose.x, s.pose.y):
                raise ScenarioError("pile spot outside arena bounds", name)
    if not any(a.kind is AgentKind.UAV for a in sc.agents):
        raise ScenarioError("at least one UAV is needed to explore the arena", "agents")


def _pile_world(cfg: PileConfig, first_id: int = 0):
    return build_pile(
        cfg.owner,
        cfg.origin,
        cfg.yaw,
        cfg.counts,
        cfg.row_spacing,
        cfg.col_spacing,
        first_id,
        stacked=cfg.stacked,
        brick_yaw=cfg.brick_yaw,
    )


def competition_layout_notes(sc: Scenario) -> list[str]:
    """Differences from the competition layout (informational only)."""
    notes = []
    for ch in sc.channels:
        n = len(ch.spec.layers)
        if ch.site is Site.UAV and n != 2:
            notes.append(f"UAV channel {ch.id} has {n} layers (competition: 2)")
        if ch.site is Site.UGV and n != 5:
            notes.append(f"UGV channel {ch.id} has {n} layers (competition: 5, one metre of wall)")
    for site in Site:
        chans = [c for c in sc.channels if c.site is site]
        if chans and not any(c.reserved_kind is BrickKind.ORANGE for c in chans):
            notes.append(f"no channel at {site.value} is reserved for orange bricks")
    n_uav = sum(a.kind is AgentKind.UAV for a in sc.agents)
    n_ugv = sum(a.kind is AgentKind.UGV for a in sc.agents)
    if (n_uav, n_ugv) != (3, 1):
        notes.append(f"{n_uav} UAVs and {n_ugv} UGVs (competition: 3 and 1)")
    return notes


# world construction ------------------------------------------------------

ZONE_MARGIN = 2.0


def _bbox(points: list[tuple[float, float]], margin: float) -> tuple[float, float, float, float]:
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    return (min(xs) - margin, min(ys) - margin, max(xs) + margin, max(ys) + margin)


def build_world(sc: Scenario) -> tuple[Arena, Dashboard]:
    arena = copy.deepcopy(sc.arena)
    spots, bricks = [], []
    for cfg, name in ((sc.uav_pile, "uav_pile"), (sc.ugv_pile, "ugv_pile")):
        if cfg is None:
            continue
        s, b = _pile_world(cfg, len(bricks))
        spots.extend(s)
        bricks.extend(b)
        pts = [(sp.pose.x, sp.pose.y) for sp in s]
        arena.landmarks[name] = (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))
        arena.zones[name] = _bbox(pts, ZONE_MARGIN)
    channels = [c.channel() for c in sc.channels]
    for site, name in ((Site.UAV, "uav_site"), (Site.UGV, "ugv_site")):
        chans = [c for c in channels if c.site is site]
        if not chans:
            continue
        pts = []
        for c in chans:
            pts.append(c.point_at(0.0)[:2])
            pts.append(c.point_at(c.length_m)[:2])
        arena.landmarks[name] = (sum(p[0] for p in pts) / len(pts), sum(p[1] for p in pts) / len(pts))
        arena.zones[name] = _bbox(pts, ZONE_MARGIN)
    specs = {c.id: c.spec for c in sc.channels}
    dashboard = Dashboard(spots, channels, specs, bricks, landmarks=tuple(arena.landmarks))
    return arena, dashboard


# loading -----------------------------------------------------------------

def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", source=str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, source=str(path)) from None
    return parse_scenario(data, source=str(path))


def default_scenario_data() -> dict:
    text = resources.files("wallsim").joinpath("data/default_scenario.json").read_text()
    return json.loads(text)


def default_scenario() -> Scenario:
    return parse_scenario(default_scenario_data(), source="default")


def single_channel_scenario(layers: list[list[str]], bricks_per_spot: int = 10) -> dict:
    """One UAV, one UAV channel, no ground vehicle."""
    return {
        "name": "single-channel",
        "arena": {"size": [50, 40, 20]},
        "uav_pile": {"origin": [6.0, 22.0], "bricks_per_spot": bricks_per_spot},
        "channels": [{"id": "A1", "site": "uav", "origin": [30.0, 26.0, 1.7], "heading": 0.0, "layers": layers}],
        "agents": [{"id": "uav1", "kind": "uav", "start": [3.0, 30.0, 0.0, 0.0]}],
    }


def layer_height(layer: int) -> float:
    return layer * BRICK_HEIGHT
