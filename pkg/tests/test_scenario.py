import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from staruav.scenario import (
    Position2D,
    PhysicalConstants,
    ScenarioError,
    UserSpec,
    build_time_grid,
    waypoint_path,
)
from conftest import make_scenario, static_user


def test_position_distance_is_euclidean():
    assert Position2D(0.0, 0.0).distance_to(Position2D(3.0, 4.0)) == 5.0


def test_position_rejects_nonfinite():
    with pytest.raises(ScenarioError):
        Position2D(math.nan, 0.0)


def test_time_grid_slot_length():
    grid = build_time_grid(60.0, 6)
    assert grid.slot_len == 10.0
    assert grid.slot_count == 6


@pytest.mark.parametrize("total,slots", [(0.0, 4), (-5.0, 4), (10.0, 1), (10.0, 2.5)])
def test_time_grid_rejects_bad_inputs(total, slots):
    with pytest.raises(ScenarioError):
        build_time_grid(total, slots)


def test_waypoint_path_static_without_waypoints():
    grid = build_time_grid(30.0, 3)
    path = waypoint_path(Position2D(5.0, 7.0), [], 0.0, grid)
    assert len(path) == 4
    assert all(p == Position2D(5.0, 7.0) for p in path)


def test_waypoint_path_constant_speed_on_one_leg():
    # 10 m slots at 2 m/s along the x axis: 20 m per slot edge
    grid = build_time_grid(30.0, 3)
    path = waypoint_path(Position2D(0.0, 0.0), [Position2D(100.0, 0.0)], 2.0, grid)
    assert [p.x for p in path] == [0.0, 20.0, 40.0, 60.0]
    assert all(p.y == 0.0 for p in path)


def test_waypoint_path_clamps_at_final_waypoint():
    grid = build_time_grid(100.0, 4)
    path = waypoint_path(Position2D(0.0, 0.0), [Position2D(30.0, 0.0)], 1.0, grid)
    # the polyline is 30 m long; 25 m/slot exhausts it during slot 2
    assert path[-1] == Position2D(30.0, 0.0)
    assert path[-2] == Position2D(30.0, 0.0)


def test_waypoint_path_rejects_negative_speed():
    grid = build_time_grid(10.0, 2)
    with pytest.raises(ScenarioError):
        waypoint_path(Position2D(0.0, 0.0), [Position2D(1.0, 0.0)], -1.0, grid)


@given(
    speed=st.floats(0.0, 10.0),
    n_slots=st.integers(2, 12),
    pts=st.lists(
        st.tuples(st.floats(-500, 500), st.floats(-500, 500)), min_size=1, max_size=4
    ),
)
@settings(deadline=None, max_examples=100)
def test_waypoint_path_steps_respect_speed(speed, n_slots, pts):
    grid = build_time_grid(60.0, n_slots)
    path = waypoint_path(Position2D(0.0, 0.0), [Position2D(*p) for p in pts], speed, grid)
    assert len(path) == n_slots + 1
    for a, b in zip(path, path[1:]):
        # straight-line displacement never exceeds arc length walked
        assert a.distance_to(b) <= speed * grid.slot_len + 1e-9


def test_scenario_requires_su_pair():
    grid = build_time_grid(40.0, 4)
    users = (static_user("p1", "PU", (10.0, 10.0), 4),)
    with pytest.raises(ScenarioError, match="SU_source"):
        make_scenario_with_users(users, grid)


def make_scenario_with_users(users, grid):
    from staruav.scenario import Scenario

    return Scenario(
        bs=Position2D(0.0, 500.0),
        users=users,
        grid=grid,
        consts=PhysicalConstants(element_count=2),
        q_start=Position2D(0.0, 0.0),
        q_end=Position2D(100.0, 100.0),
    )


def test_scenario_rejects_duplicate_ids():
    grid = build_time_grid(40.0, 4)
    users = (
        static_user("p1", "PU", (10.0, 10.0), 4),
        static_user("p1", "PU", (20.0, 20.0), 4),
        static_user("s1", "SU_source", (30.0, 30.0), 4),
        static_user("s2", "SU_dest", (40.0, 40.0), 4),
    )
    with pytest.raises(ScenarioError, match="duplicate"):
        make_scenario_with_users(users, grid)


def test_scenario_rejects_wrong_path_length():
    grid = build_time_grid(40.0, 4)
    users = (
        static_user("p1", "PU", (10.0, 10.0), 3),  # one edge short
        static_user("s1", "SU_source", (30.0, 30.0), 4),
        static_user("s2", "SU_dest", (40.0, 40.0), 4),
    )
    with pytest.raises(ScenarioError, match="path"):
        make_scenario_with_users(users, grid)


def test_scenario_rejects_unreachable_endpoint():
    with pytest.raises(ScenarioError, match="reachable"):
        make_scenario(n_slots=4, total_time=4.0, q_end=(5000.0, 5000.0))


def test_user_spec_rejects_unknown_role():
    with pytest.raises(ScenarioError, match="role"):
        UserSpec(id="u", role="relay", path=(Position2D(0, 0), Position2D(0, 0)))


def test_constants_reject_nonpositive():
    with pytest.raises(ScenarioError):
        PhysicalConstants(altitude=0.0)
    with pytest.raises(ScenarioError):
        PhysicalConstants(path_loss_exp=1.5)
    with pytest.raises(ScenarioError):
        PhysicalConstants(element_count=0)


def test_scenario_views():
    scn = make_scenario()
    assert scn.num_pus == 2
    assert {u.id for u in scn.pus} == {"p1", "p2"}
    assert scn.su_source.id == "s1"
    assert scn.su_dest.id == "s2"
    assert [u.id for u in scn.receivers] == ["p1", "p2", "s2"]
