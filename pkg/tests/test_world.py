import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import LENGTHS, MASSES, prefix_slots
from wallsim.world import (
    AlreadyBlocked,
    Arena,
    BrickKind,
    BrickState,
    Channel,
    Dashboard,
    IllegalBrickTransition,
    LayerOverflow,
    NotOwner,
    PileOwner,
    Pose,
    ReservedKindViolation,
    Site,
    SlotStatus,
    SpotStatus,
    WallSpec,
    block_channel,
    build_pile,
    next_required_brick,
    release_channel,
    wall_slots,
    wrap_half_pi,
    wrap_pi,
)

R, G, B, O = BrickKind.RED, BrickKind.GREEN, BrickKind.BLUE, BrickKind.ORANGE


def channel(cid="c1", origin=(0.0, 0.0, 1.7), heading=0.0, reserved=None, site=Site.UAV):
    return Channel(cid, origin, heading, site, 4.0, reserved)


def dashboard(specs: dict[str, list], reserved=None):
    chans = [channel(cid, (0.0, 4.0 * i, 1.7), reserved=(reserved or {}).get(cid)) for i, cid in enumerate(specs)]
    spots, bricks = build_pile(PileOwner.UAV, (0.0, 20.0), 0.0, [[2] * 3 for _ in range(4)], 3.0, 3.0)
    return Dashboard(spots, chans, {cid: WallSpec.of(layers) for cid, layers in specs.items()}, bricks)


def test_brick_table_matches_kinds():
    for kind in BrickKind:
        assert kind.length_m == LENGTHS[kind.value]
        assert kind.mass_kg == MASSES[kind.value]
        assert kind.width_m == kind.height_m == 0.2
    assert [k.row for k in (R, G, B, O)] == [0, 1, 2, 3]


def test_parse_kind_is_case_insensitive():
    assert BrickKind.parse(" orange ") is O
    with pytest.raises(ValueError):
        BrickKind.parse("Purple")


def test_wall_slots_example_layer():
    slots = wall_slots(WallSpec.of([[R, G, B]]), channel())
    assert [s.offset_m for s in slots] == pytest.approx([0.0, 0.3, 0.9])
    assert [s.target_pose.x for s in slots] == pytest.approx([0.15, 0.60, 1.50])
    assert all(s.target_pose.z == pytest.approx(1.80) for s in slots)


def test_wall_slots_empty_spec():
    assert wall_slots(WallSpec(), channel()) == []


def test_wall_slots_overflow():
    with pytest.raises(LayerOverflow):
        wall_slots(WallSpec.of([[O, O, O]]), channel())


def test_wall_slots_reserved_kind():
    with pytest.raises(ReservedKindViolation):
        wall_slots(WallSpec.of([[O, R]]), channel(reserved=O))
    assert len(wall_slots(WallSpec.of([[O, O], [O, O]]), channel(reserved=O))) == 4


def test_wall_slots_follow_heading():
    slots = wall_slots(WallSpec.of([[G]]), channel(origin=(10.0, 5.0, 0.0), heading=math.pi / 2))
    assert slots[0].target_pose.x == pytest.approx(10.0)
    assert slots[0].target_pose.y == pytest.approx(5.3)
    assert slots[0].target_pose.z == pytest.approx(0.1)


layer_strategy = st.lists(st.sampled_from([R, G, B]), min_size=0, max_size=6).filter(
    lambda layer: sum(k.length_m for k in layer) <= 4.0
)


@settings(max_examples=150, deadline=None)
@given(
    layers=st.lists(layer_strategy, max_size=5),
    ox=st.floats(-20, 20),
    oy=st.floats(-20, 20),
    heading=st.floats(-math.pi, math.pi),
)
def test_wall_slots_matches_prefix_oracle(layers, ox, oy, heading):
    ch = channel(origin=(ox, oy, 0.0), heading=heading)
    got = wall_slots(WallSpec.of(layers), ch)
    want = prefix_slots([[k.value for k in layer] for layer in layers], (ox, oy, 0.0), heading)
    assert len(got) == len(want)
    for s, (layer, idx, start, cx, cy, cz) in zip(got, want):
        assert (s.layer, s.index) == (layer, idx)
        assert s.offset_m == pytest.approx(start, abs=1e-12)
        assert s.target_pose.x == pytest.approx(cx, abs=1e-9)
        assert s.target_pose.y == pytest.approx(cy, abs=1e-9)
        assert s.target_pose.z == pytest.approx(cz, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(layers=st.lists(layer_strategy, max_size=5))
def test_slots_in_layer_do_not_overlap_and_are_pure(layers):
    spec = WallSpec.of(layers)
    slots = wall_slots(spec, channel())
    assert slots == wall_slots(spec, channel())
    by_layer = {}
    for s in slots:
        by_layer.setdefault(s.layer, []).append((s.offset_m, s.end_m))
    for intervals in by_layer.values():
        intervals.sort()
        for (a0, a1), (b0, _) in zip(intervals, intervals[1:]):
            assert a1 <= b0 + 1e-12


def test_next_required_brick_fresh_channel():
    dash = dashboard({"c1": [[R, G], [G, R]]})
    slot, kind = next_required_brick(dash, dash.channels["c1"])
    assert (slot.layer, slot.offset_m, kind) == (0, 0.0, R)


def test_next_required_brick_second_layer_waits_for_first():
    dash = dashboard({"c1": [[R, G], [G, R]]})
    slots = dash.slots["c1"]
    slots[0].status = SlotStatus.FILLED
    slots[1].status = SlotStatus.RESERVED
    assert next_required_brick(dash, dash.channels["c1"]) is None
    slots[1].status = SlotStatus.FILLED
    slot, kind = next_required_brick(dash, dash.channels["c1"])
    assert (slot.layer, slot.offset_m, kind) == (1, 0.0, G)


def test_next_required_brick_skips_reserved_in_layer():
    dash = dashboard({"c1": [[R, G, B]]})
    dash.slots["c1"][0].status = SlotStatus.RESERVED
    slot, kind = next_required_brick(dash, dash.channels["c1"])
    assert (slot.index, kind) == (1, G)


def test_next_required_brick_complete_channel():
    dash = dashboard({"c1": [[R]]})
    dash.slots["c1"][0].status = SlotStatus.FILLED
    assert next_required_brick(dash, dash.channels["c1"]) is None
    assert dash.complete()


def test_block_and_release():
    dash = dashboard({"c1": [[R]]})
    ch = dash.channels["c1"]
    block_channel(dash, ch, "A")
    assert ch.blocked_by == "A"
    with pytest.raises(AlreadyBlocked):
        block_channel(dash, ch, "B")
    with pytest.raises(NotOwner):
        release_channel(dash, ch, "B")
    release_channel(dash, ch, "A")
    assert ch.blocked_by is None


def test_uav_pile_has_twelve_spots():
    spots, bricks = build_pile(PileOwner.UAV, (0.0, 0.0), 0.0, [[3] * 3 for _ in range(4)], 3.0, 3.0)
    assert len(spots) == 12
    assert len(bricks) == 36
    assert {s.kind for s in spots if s.row == 3} == {O}
    assert spots[0].top_z() == pytest.approx(0.6)


def test_brick_lifecycle_edges():
    dash = dashboard({"c1": [[R]]})
    spot = dash.spots_of(PileOwner.UAV)[0]
    brick = dash.take_top(spot, "A")
    assert brick.state is BrickState.HELD
    with pytest.raises(IllegalBrickTransition):
        brick.transition(BrickState.IN_PILE)
    dash.drop_brick(brick.id, Pose(1.0, 1.0, 0.1))
    home = dash.recover_brick(brick.id)
    assert home is spot and spot.stack[-1] == brick.id
    assert brick.state is BrickState.IN_PILE


def test_take_last_brick_depletes_and_recovery_frees():
    dash = dashboard({"c1": [[R]]})
    spot = dash.spots_of(PileOwner.UAV)[0]
    a = dash.take_top(spot, "A")
    dash.take_top(spot, "A")
    assert spot.status is SpotStatus.DEPLETED
    dash.drop_brick(a.id, Pose(0, 0, 0.1))
    dash.recover_brick(a.id)
    assert spot.status is SpotStatus.FREE


def test_conservation_counts():
    dash = dashboard({"c1": [[R]]})
    before = {k: sum(c.values()) for k, c in dash.counts_by_state().items()}
    spot = dash.spots_of(PileOwner.UAV)[0]
    brick = dash.take_top(spot, "A")
    dash.place_brick(brick.id, dash.slots["c1"][0])
    after = {k: sum(c.values()) for k, c in dash.counts_by_state().items()}
    assert before == after
    assert dash.counts_by_state()[R][BrickState.PLACED] == 1


def test_adjacency_follows_site_order():
    dash = dashboard({"a": [[R]], "b": [[R]], "c": [[R]]})
    assert dash.adjacent_channels("a") == ("b",)
    assert dash.adjacent_channels("b") == ("a", "c")


def test_arena_contains_and_zones():
    arena = Arena(zones={"pile": (0.0, 0.0, 2.0, 2.0)})
    assert arena.contains(50.0, 40.0, 20.0)
    assert not arena.contains(50.1, 0.0)
    assert arena.zone_of(1.0, 1.0) == "pile"
    assert arena.zone_of(3.0, 1.0) is None
    assert arena.clamp(-1.0, 41.0, 5.0) == (0.0, 40.0, 5.0)


@given(st.floats(-50, 50))
def test_wraps_stay_in_range(a):
    w = wrap_pi(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
    h = wrap_half_pi(a)
    assert -math.pi / 2 < h <= math.pi / 2
    assert math.isclose(abs(math.sin(2 * h)), abs(math.sin(2 * a)), abs_tol=1e-9)
