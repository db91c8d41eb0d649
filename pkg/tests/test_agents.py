import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import footprint_covers
from wallsim.agents import (
    UAV_SPEED_LIMIT,
    UGV_SPEED_LIMIT,
    AgentState,
    DegenerateFov,
    Event,
    MissionMode,
    Twist,
    corridor_for,
    lawnmower_plan,
    mode_transition,
    step_kinematics,
    strip_width,
)
from wallsim.world import Arena, BrickKind, Pose


def test_speed_limits():
    assert UAV_SPEED_LIMIT == pytest.approx(15 / 3.6)
    assert UGV_SPEED_LIMIT == pytest.approx(30 / 3.6)


def test_uav_command_is_clamped():
    s = step_kinematics(AgentState.uav("a", Pose(0, 0, 3)), Twist(10.0, 0.0, 0.0), 0.05)
    assert s.velocity.vx == pytest.approx(4.1667, abs=1e-4)
    assert s.pose.x == pytest.approx(4.1667 * 0.05, abs=1e-5)


def test_zero_command_keeps_pose():
    a = AgentState.uav("a", Pose(1, 2, 3, 0.5))
    assert step_kinematics(a, Twist(), 0.05).pose == a.pose


def test_ugv_stays_on_ground():
    s = step_kinematics(AgentState.ugv("g", Pose(1, 1, 0)), Twist(1.0, 0.0, 1.0), 0.05)
    assert s.velocity.vz == 0.0 and s.pose.z == 0.0


def test_nonpositive_dt_rejected():
    with pytest.raises(ValueError):
        step_kinematics(AgentState.uav("a", Pose(0, 0, 0)), Twist(), 0.0)


def test_pose_clamped_to_arena():
    s = step_kinematics(AgentState.uav("a", Pose(49.99, 0.0, 0.0)), Twist(4.0, -4.0, -1.0), 0.05, Arena())
    assert (s.pose.x, s.pose.y, s.pose.z) == (50.0, 0.0, 0.0)


@settings(max_examples=200)
@given(
    vx=st.floats(-100, 100),
    vy=st.floats(-100, 100),
    vz=st.floats(-100, 100),
    ground=st.booleans(),
)
def test_speed_law(vx, vy, vz, ground):
    agent = AgentState.ugv("g", Pose(0, 0)) if ground else AgentState.uav("a", Pose(0, 0, 5))
    s = step_kinematics(agent, Twist(vx, vy, vz), 0.05)
    assert s.velocity.speed <= agent.speed_limit_mps + 1e-9


@pytest.mark.parametrize(
    "kind,height",
    [(BrickKind.ORANGE, 3.0), (BrickKind.BLUE, 5.0), (BrickKind.RED, 7.0), (BrickKind.GREEN, 7.0)],
)
def test_corridor_for(kind, height):
    assert corridor_for(kind) == height


def test_corridor_is_monotone_in_mass():
    kinds = sorted(BrickKind, key=lambda k: k.mass_kg)
    heights = [corridor_for(k) for k in kinds]
    assert heights == sorted(heights, reverse=True)


def test_transition_examples():
    assert mode_transition(MissionMode.IDLE, Event.TASK_ASSIGNED, "pick") is MissionMode.TRAVEL_TO_PICK
    assert mode_transition(MissionMode.GRIP, Event.GRIP_CONFIRMED) is MissionMode.ASCEND
    assert mode_transition(MissionMode.DESCEND, Event.FAULT_RAISED) is MissionMode.FAULT
    assert mode_transition(MissionMode.RELEASE, Event.RELEASED) is MissionMode.IDLE


def test_full_pick_place_chain():
    mode = MissionMode.IDLE
    chain = [
        (Event.TASK_ASSIGNED, MissionMode.TRAVEL_TO_PICK),
        (Event.ARRIVED_AT_PICK, MissionMode.ALIGN_OVER_BRICK),
        (Event.CENTERED, MissionMode.DESCEND),
        (Event.TOUCHED_DOWN, MissionMode.GRIP),
        (Event.GRIP_CONFIRMED, MissionMode.ASCEND),
        (Event.AT_CORRIDOR, MissionMode.TRAVEL_TO_PLACE),
        (Event.ARRIVED_AT_PLACE, MissionMode.PLACE_ALIGN),
        (Event.EDGE_LOCKED, MissionMode.RELEASE),
        (Event.RELEASED, MissionMode.IDLE),
    ]
    for event, expected in chain:
        mode = mode_transition(mode, event, "pick")
        assert mode is expected


@pytest.mark.parametrize("mode", list(MissionMode))
@pytest.mark.parametrize("event", list(Event))
def test_transition_is_total(mode, event, caplog):
    nxt = mode_transition(mode, event, "pick")
    assert isinstance(nxt, MissionMode)
    if event is Event.FAULT_RAISED:
        assert nxt is MissionMode.FAULT


def test_illegal_pair_keeps_mode_and_warns(caplog):
    with caplog.at_level("WARNING"):
        assert mode_transition(MissionMode.IDLE, Event.RELEASED) is MissionMode.IDLE
    assert "ignoring event" in caplog.text


def test_release_unreachable_without_grip():
    # breadth-first over every event from Idle; Release must sit behind GripConfirmed
    seen = {MissionMode.IDLE}
    frontier = [MissionMode.IDLE]
    while frontier:
        mode = frontier.pop()
        for event in Event:
            if event in (Event.GRIP_CONFIRMED, Event.FAULT_RAISED):
                continue
            nxt = mode_transition(mode, event, "pick")
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    assert MissionMode.RELEASE not in seen
    assert MissionMode.ASCEND not in seen


def test_lawnmower_examples():
    plan = lawnmower_plan(Arena(), 10.0, math.radians(90))
    assert plan.strip_width_m == pytest.approx(20.0)
    assert plan.passes == 2
    # 53.13 deg is the rounded form of 2*atan(1/2); the literal rounding is a hair narrower than 10 m
    narrow = lawnmower_plan(Arena(), 10.0, 2 * math.atan(0.5))
    assert math.degrees(2 * math.atan(0.5)) == pytest.approx(53.13, abs=5e-3)
    assert narrow.strip_width_m == pytest.approx(10.0, abs=1e-3)
    assert narrow.passes == 4
    assert footprint_covers(narrow.waypoints, 10.0, 2 * math.atan(0.5))


def test_lawnmower_degenerate_fov():
    with pytest.raises(DegenerateFov):
        lawnmower_plan(Arena(), 10.0, 0.0)
    with pytest.raises(ValueError):
        lawnmower_plan(Arena(), 25.0, 1.0)


@pytest.mark.parametrize("alt,fov_deg", [(10.0, 90.0), (10.0, 53.13), (6.0, 70.0), (15.0, 30.0)])
def test_lawnmower_covers_arena(alt, fov_deg):
    plan = lawnmower_plan(Arena(), alt, math.radians(fov_deg))
    assert footprint_covers(plan.waypoints, alt, math.radians(fov_deg))
    assert plan.passes == math.ceil(40.0 / strip_width(alt, math.radians(fov_deg)) - 1e-12)


@settings(max_examples=25, deadline=None)
@given(alt=st.floats(2.0, 20.0), fov=st.floats(0.3, 2.8))
def test_lawnmower_coverage_property(alt, fov):
    plan = lawnmower_plan(Arena(), alt, fov)
    assert footprint_covers(plan.waypoints, alt, fov, step=0.5)
