import copy
import json
import math
from pathlib import Path

import pytest

from oracles import mission_points
from wallsim.scenario import (
    ScenarioError,
    build_world,
    default_scenario,
    default_scenario_data,
    load_scenario,
    parse_scenario,
    single_channel_scenario,
)
from wallsim.world import PileOwner, Site

ROOT = Path(__file__).resolve().parents[1]


def test_default_totals():
    data = default_scenario_data()
    sc = default_scenario()
    arena, dash = build_world(sc)
    assert len(dash.all_slots()) == 47
    want = mission_points(data["channels"])
    got = sum(sc.points[s.required_kind.row] for s in dash.all_slots())
    assert got == want == 262
    assert len(dash.bricks) == 104
    assert set(arena.landmarks) == {"uav_pile", "ugv_pile", "uav_site", "ugv_site"}
    assert len(dash.spots_of(PileOwner.UAV)) == 12


def test_packaged_default_matches_examples_file():
    assert json.loads((ROOT / "scenarios" / "default.json").read_text()) == default_scenario_data()


@pytest.mark.parametrize("path", sorted((ROOT / "scenarios").glob("*.json")))
def test_shipped_scenarios_load(path):
    arena, dash = build_world(load_scenario(path))
    assert dash.all_slots()


def test_default_ugv_channel_defaults():
    sc = default_scenario()
    g1 = next(c for c in sc.channels if c.id == "G1").channel()
    assert g1.site is Site.UGV and g1.origin[2] == 0.0


def test_channel_z_defaults_by_site():
    data = single_channel_scenario([["Red"]])
    data["channels"][0]["origin"] = [30.0, 26.0]
    sc = parse_scenario(data)
    assert sc.channels[0].channel().origin == (30.0, 26.0, 1.7)


def broken(mutator):
    data = copy.deepcopy(default_scenario_data())
    mutator(data)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(data)
    return info.value


def test_unknown_colour_has_field_path():
    err = broken(lambda d: d["channels"][0]["layers"][1].__setitem__(2, "Purple"))
    assert err.field == "channels[0].layers[1][2]"
    assert "Purple" in str(err)


def test_layer_overflow_reported():
    err = broken(lambda d: d["channels"][0]["layers"].append(["Orange", "Orange", "Orange"]))
    assert err.field == "channels[0].layers"


def test_missing_agents():
    assert broken(lambda d: d.__setitem__("agents", [])).field == "agents"


def test_no_uav():
    def only_ugv(d):
        d["agents"] = [a for a in d["agents"] if a["kind"] == "ugv"]
        d["channels"] = [c for c in d["channels"] if c["site"] == "ugv"]
        d.pop("uav_pile")

    assert broken(only_ugv).field == "agents"


def test_pose_outside_arena():
    err = broken(lambda d: d["agents"][0].__setitem__("start", [60.0, 1.0, 0.0, 0.0]))
    assert err.field == "agents[0].start"


def test_not_enough_bricks():
    err = broken(lambda d: d["uav_pile"].__setitem__("bricks_per_spot", 1))
    assert err.field == "uav_pile.counts"


def test_duplicate_channel_id():
    err = broken(lambda d: d["channels"][1].__setitem__("id", "U1"))
    assert err.field == "channels[1].id"


def test_bad_approach_side():
    err = broken(lambda d: d["channels"][4].__setitem__("approach_side", "up"))
    assert err.field == "channels[4].approach_side"


def test_unsupported_script():
    err = broken(lambda d: d.__setitem__("scripted_events", [{"type": "Meteor", "t": 1.0}]))
    assert err.field == "scripted_events[0].type"


def test_scripted_pause_parsed():
    data = single_channel_scenario([["Red"]])
    data["scripted_events"] = [{"type": "ResetPause", "t": 30.0, "duration": 5.0}]
    (ev,) = parse_scenario(data).scripted_events
    assert (ev.type, ev.t, ev.duration) == ("ResetPause", 30.0, 5.0)


def test_json_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "name": "x",\n  "arena": {\n}}\n,')
    with pytest.raises(ScenarioError) as info:
        load_scenario(p)
    assert info.value.line == 5
    assert "line 5" in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.json")


def test_not_an_object():
    with pytest.raises(ScenarioError):
        parse_scenario([1, 2, 3])


def test_world_zones_cover_piles_and_sites():
    arena, dash = build_world(default_scenario())
    for spot in dash.spots.values():
        zone = "uav_pile" if spot.owner is PileOwner.UAV else "ugv_pile"
        assert arena.zone_of(spot.pose.x, spot.pose.y) == zone
    for slot in dash.all_slots():
        assert arena.zone_of(slot.target_pose.x, slot.target_pose.y) in {"uav_site", "ugv_site"}


def test_ugv_pile_is_flat_single_column():
    _, dash = build_world(default_scenario())
    spots = dash.spots_of(PileOwner.UGV)
    assert {s.col for s in spots} == {0}
    for spot in spots:
        zs = {round(dash.bricks[b].pose.z, 9) for b in spot.stack}
        assert zs == {0.1}
        assert all(math.isclose(abs(dash.bricks[b].pose.yaw), math.pi / 2) for b in spot.stack)
