import numpy as np
import pytest

import oracles
from socnav.errors import ConfigError
from socnav.rng import RunStreams
from socnav.scenarios import ScenarioConfig
from socnav.world import FAR_OFFSET, Action, GridMap, World, bfs_distance_field, person_step

from conftest import person_row, tiny_doc


def make_world(doc, seed=11):
    scn = ScenarioConfig(doc, require_coverage=False)
    w = World(scn, RunStreams(seed))
    w.reset()
    return w


def test_grid_rejects_tiny_and_out_of_bounds():
    with pytest.raises(ConfigError):
        GridMap(3, 8, [])
    with pytest.raises(ConfigError):
        GridMap(6, 6, [(6, 0)])
    g = GridMap(6, 6, [(2, 2)])
    assert g.free((0, 0)) and not g.free((2, 2)) and not g.free((-1, 0))
    assert g.blocked[2, 2] == 1 and g.blocked[0, 0] == 0


def test_distance_field_matches_reference_bfs():
    g = GridMap(7, 5, [(3, 0), (3, 1), (3, 2), (3, 3)])
    field = bfs_distance_field(g, (6, 0))
    expect = oracles.bfs_field(g.free_cells(), (6, 0))
    for x, y in g.free_cells():
        assert field[y, x] == expect.get((x, y), -1)
    assert field[0, 3] == -1  # obstacle cell stays unreachable
    with pytest.raises(ConfigError):
        bfs_distance_field(g, (3, 0))


def test_distance_field_marks_unreachable_pockets():
    # a fully walled-off corner
    g = GridMap(5, 5, [(1, 0), (0, 1), (1, 1)])
    field = bfs_distance_field(g, (4, 4))
    assert field[0, 0] == -1


def test_reset_places_robot_and_standers():
    doc = tiny_doc(roster=[person_row("s1", spawn_cell=[3, 3])])
    w = make_world(doc)
    assert (w.rx, w.ry) == (0, 0)
    assert (int(w.px[0]), int(w.py[0])) == (3, 3)
    assert w.timestep == 0


def test_spawn_pool_draw_is_seeded():
    doc = tiny_doc(roster=[person_row("s1"), person_row("s2")])
    a = make_world(doc, seed=5)
    b = make_world(doc, seed=5)
    c = make_world(doc, seed=6)
    assert (a.px.tolist(), a.py.tolist()) == (b.px.tolist(), b.py.tolist())
    assert (a.px[0], a.py[0]) != (a.px[1], a.py[1])
    assert (a.px.tolist(), a.py.tolist()) != (c.px.tolist(), c.py.tolist())


def test_wall_bump_is_a_silent_stay():
    w = make_world(tiny_doc())
    ev, done = w.step(Action.LEFT)
    assert (w.rx, w.ry) == (0, 0)
    assert not ev.robot_moved and not ev.collision and not done


def test_goal_progress_tracks_bfs_distance():
    w = make_world(tiny_doc())
    ev, _ = w.step(Action.RIGHT)
    assert ev.goal_progress
    ev, _ = w.step(Action.STAY)
    assert not ev.goal_progress
    ev, _ = w.step(Action.LEFT)
    assert not ev.goal_progress


def test_episode_times_out_without_completion():
    doc = tiny_doc(t_max=9)
    w = make_world(doc)
    for i in range(9):
        ev, done = w.step(Action.STAY)
    assert done and not ev.task_completed
    assert w.timestep == 9


def test_cleaning_completion_ends_episode():
    doc = tiny_doc(goal=(2, 0))
    w = make_world(doc)
    ev, done = w.step(Action.RIGHT)
    assert not done
    ev, done = w.step(Action.RIGHT)
    assert done and ev.task_completed


def test_stepping_onto_a_person_is_a_collision_and_violation():
    doc = tiny_doc(roster=[person_row("s1", spawn_cell=[2, 0])])
    w = make_world(doc)
    w.step(Action.RIGHT)
    ev, _ = w.step(Action.RIGHT)
    assert (w.rx, w.ry) == (2, 0)
    assert ev.collision and ev.comfort_violation
    assert ev.violated_person == "s1"
    assert ev.nearest_d2 == 0 and ev.occupancy == 2
    assert ev.interaction


def test_adjacent_walker_always_takes_its_step():
    # slow walkers fail the speed draw more often than not, but a walker
    # right next to the robot must keep moving
    doc = tiny_doc(
        width=8,
        height=8,
        roster=[person_row("m1", activity="walking", spawn_cell=[1, 0], waypoints=[[6, 0]])],
    )
    w = make_world(doc)
    ev, _ = w.step(Action.STAY)
    assert (int(w.px[0]), int(w.py[0])) == (2, 0)
    # the robot closing in again re-arms the override
    ev, _ = w.step(Action.RIGHT)
    assert (int(w.px[0]), int(w.py[0])) == (3, 0)


def test_boxed_walker_sidesteps_around_the_robot():
    # person at (1,2) wants (3,2); the robot sits in the way at (2,2); the
    # free neighbour gaining the most distance from the robot is (0,2)
    doc = tiny_doc(
        dock=(2, 2),
        roster=[person_row("m1", activity="walking", spawn_cell=[1, 2], waypoints=[[3, 2]])],
    )
    w = make_world(doc)
    ev, _ = w.step(Action.STAY)
    assert (int(w.px[0]), int(w.py[0])) == (0, 2)


def test_single_cell_waypoint_pool_never_hangs():
    doc = tiny_doc(
        roster=[person_row("m1", activity="walking", spawn_cell=[3, 3], waypoints=[[3, 3]])]
    )
    w = make_world(doc)
    for _ in range(5):
        w.step(Action.STAY)
    assert (int(w.px[0]), int(w.py[0])) == (3, 3)


def test_observe_offset_codes():
    doc = tiny_doc(roster=[person_row("s1", spawn_cell=[1, 0])])
    w = make_world(doc)
    cell, off, occ, phase = w.observe()
    assert cell == 0 and phase == 0
    assert off == (1 + 2) * 5 + (0 + 2)
    empty = make_world(tiny_doc())
    assert empty.observe()[1] == FAR_OFFSET


def test_observe_far_person_uses_far_code():
    doc = tiny_doc(width=10, height=10, roster=[person_row("s1", spawn_cell=[8, 8])])
    w = make_world(doc)
    assert w.observe()[1] == FAR_OFFSET


def test_person_step_moves_x_before_y():
    doc = tiny_doc(
        roster=[person_row("m1", activity="walking", spawn_cell=[1, 1], waypoints=[[3, 3]])]
    )
    w = make_world(doc)

    class AlwaysMove:
        def random(self):
            return 0.0

    assert person_step(0, w, AlwaysMove()) == (2, 1)
    assert person_step(0, w, AlwaysMove()) == (3, 1)
    assert person_step(0, w, AlwaysMove()) == (3, 2)
