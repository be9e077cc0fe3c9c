"""Deterministic grid world: robot, stochastic walkers, task-driven episodes.

Coordinates are (x, y) cells with y growing downward; arrays indexed [y, x].
The robot moves one cell per step (or stays). A move into a wall or off the
grid resolves as a silent stay and is not a collision. Persons advance after
the robot, then all step events are computed from the post-move geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import kernels
from .errors import ConfigError
from .social import person_radii_arrays, relative_distance  # noqa: F401

FAR_OFFSET = 25  # quantized-offset code when no person is within the 5x5 window


class Action(IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


ACTION_DELTAS = {
    Action.UP: (0, -1),
    Action.DOWN: (0, 1),
    Action.LEFT: (-1, 0),
    Action.RIGHT: (1, 0),
    Action.STAY: (0, 0),
}
ACTION_NAMES = [a.name.lower() for a in Action]


@dataclass(frozen=True)
class Person:
    """Roster entry. Attributes are fixed; position lives in the world state."""

    id: str
    gender: str
    age_group: str
    mobility: str
    skin_tone: str
    relationship_degree: str
    relationship_score: float
    speed_class: str
    activity: str
    spawn_cell: tuple | None = None  # None means drawn from the spawn pool


SPEED_PROBS = {"slow": 0.4, "normal": 0.7, "fast": 0.95}


class GridMap:
    """Rectangular grid with obstacle cells."""

    def __init__(self, width: int, height: int, obstacles):
        if width < 4 or height < 4:
            raise ConfigError(f"grid must be at least 4x4, got {width}x{height}")
        self.width = width
        self.height = height
        self.obstacles = frozenset((int(x), int(y)) for x, y in obstacles)
        for x, y in self.obstacles:
            if not (0 <= x < width and 0 <= y < height):
                raise ConfigError(f"obstacle {(x, y)} outside the grid")
        self.blocked = np.zeros((height, width), dtype=np.uint8)
        for x, y in self.obstacles:
            self.blocked[y, x] = 1

    def in_bounds(self, cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def free(self, cell) -> bool:
        return self.in_bounds(cell) and cell not in self.obstacles

    def free_cells(self) -> list:
        return [
            (x, y)
            for y in range(self.height)
            for x in range(self.width)
            if (x, y) not in self.obstacles
        ]


def bfs_distance_field(grid: GridMap, target) -> np.ndarray:
    """Breadth-first distances to target over free cells, -1 where unreachable."""
    if not grid.free(tuple(target)):
        raise ConfigError(f"distance field target {target} is not a free cell")
    dist = np.full((grid.height, grid.width), -1, dtype=np.int32)
    tx, ty = int(target[0]), int(target[1])
    dist[ty, tx] = 0
    queue = [(tx, ty)]
    head = 0
    while head < len(queue):
        x, y = queue[head]
        head += 1
        d = dist[y, x] + 1
        for dx, dy in ((0, -1), (0, 1), (-1, 0), (1, 0)):
            nx, ny = x + dx, y + dy
            if 0 <= nx < grid.width and 0 <= ny < grid.height:
                if grid.blocked[ny, nx] == 0 and dist[ny, nx] < 0:
                    dist[ny, nx] = d
                    queue.append((nx, ny))
    return dist


@dataclass
class StepEvents:
    """Everything observed in one step, computed post-move."""

    goal_progress: bool = False
    collision: bool = False
    comfort_violation: bool = False
    violated_person: str | None = None
    task_completed: bool = False
    # context the experience log and relearning need
    nearest_idx: int = -1
    nearest_d2: int = -1
    occupancy: int = 0
    robot_moved: bool = False
    interaction: bool = False
    service_latency: int = -1
    served_idx: int = -1


class World:
    """One scenario instance stepped episode by episode."""

    def __init__(self, scenario, streams):
        self.scenario = scenario
        self.streams = streams
        self.grid = scenario.grid
        self.n_persons = len(scenario.persons)
        self.persons = scenario.persons
        radii, cr2 = person_radii_arrays(scenario.persons, scenario.rule_table, scenario.membership)
        self._radii = radii
        self._cr2 = cr2
        self._move_p = np.array([SPEED_PROBS[p.speed_class] for p in scenario.persons])
        self._walk0 = np.array(
            [1 if p.activity == "walking" else 0 for p in scenario.persons], dtype=np.uint8
        )
        self.task = scenario.make_task()
        self.px = np.zeros(self.n_persons, dtype=np.int64)
        self.py = np.zeros(self.n_persons, dtype=np.int64)
        self.wx = np.zeros(self.n_persons, dtype=np.int64)
        self.wy = np.zeros(self.n_persons, dtype=np.int64)
        self.mobile = np.zeros(self.n_persons, dtype=np.uint8)
        self.rx = 0
        self.ry = 0
        self.timestep = 0
        self._prev_goal_dist = 0
        self._int2 = float(scenario.interaction_range) ** 2

    # ---------- episode control ----------

    def reset(self) -> None:
        """Place robot and persons, reset the task schedule."""
        sc = self.scenario
        self.rx, self.ry = sc.dock
        self.timestep = 0
        self.mobile[:] = self._walk0
        pool = sc.spawn_pool
        need = [i for i, p in enumerate(sc.persons) if p.spawn_cell is None]
        if need:
            if len(pool) < len(need):
                raise ConfigError("spawn pool smaller than the roster")
            picks = self.streams.spawn.choice(len(pool), size=len(need), replace=False)
            for j, i in enumerate(need):
                self.px[i], self.py[i] = pool[picks[j]]
        for i, p in enumerate(sc.persons):
            if p.spawn_cell is not None:
                self.px[i], self.py[i] = p.spawn_cell
        # walkers get an initial waypoint; standers target their own cell
        for i in range(self.n_persons):
            if self.mobile[i]:
                wpool = sc.waypoint_pools[i]
                k = int(self.streams.spawn.integers(len(wpool)))
                self.wx[i], self.wy[i] = wpool[k]
            else:
                self.wx[i], self.wy[i] = self.px[i], self.py[i]
        self.task.reset(self)
        self._prev_goal_dist = self._goal_dist()

    def _goal_dist(self) -> int:
        target = self.task.target_cell()
        d = self.scenario.dist_fields[target][self.ry, self.rx]
        return int(d)

    def observe(self):
        """State-key ingredients: (cell_idx, offset_code, occupancy, phase)."""
        if self.n_persons:
            nearest, nd2, occ, _ = kernels.proximity_scan(
                self.rx,
                self.ry,
                self.px,
                self.py,
                self._cr2,
                self._radii["viol2_near"],
                self._radii["viol2_far"],
                self._radii["fpa2_near"],
                self._radii["fpa2_far"],
                self._radii["npa2_near"],
                self._radii["npa2_far"],
            )
            dx = int(self.px[nearest]) - self.rx
            dy = int(self.py[nearest]) - self.ry
            if -2 <= dx <= 2 and -2 <= dy <= 2:
                off = (dx + 2) * 5 + (dy + 2)
            else:
                off = FAR_OFFSET
        else:
            off = FAR_OFFSET
            occ = 0
        cell = self.ry * self.grid.width + self.rx
        return cell, off, occ, self.task.phase_id()

    def step(self, action: Action) -> tuple[StepEvents, bool]:
        self.timestep += 1
        ev = StepEvents()
        dx, dy = ACTION_DELTAS[Action(action)]
        nx, ny = self.rx + dx, self.ry + dy
        if (dx or dy) and self.grid.free((nx, ny)):
            self.rx, self.ry = nx, ny
            ev.robot_moved = True

        self.task.pre_advance(self)

        if self.n_persons:
            self._refresh_waypoints()
            draws = self.streams.motion.random(self.n_persons)
            move_ok = ((draws < self._move_p) & (self.mobile == 1)).astype(np.uint8)
            # nobody dawdles right next to a moving machine: adjacency overrides
            # the speed draw so a walker beside the robot always takes its step
            near = (self.px - self.rx) ** 2 + (self.py - self.ry) ** 2 <= 2
            move_ok |= (near & (self.mobile == 1)).astype(np.uint8)
            forced = self.task.forced_move(self)
            if forced is not None:
                move_ok |= forced
            gate = self.task.move_gate(self)
            if gate is not None:
                move_ok &= gate
            arrived = kernels.advance_persons(
                self.px, self.py, self.wx, self.wy, move_ok, self.grid.blocked, self.rx, self.ry
            )
            self._handle_stalls(arrived)
            nearest, nd2, occ, vidx = kernels.proximity_scan(
                self.rx,
                self.ry,
                self.px,
                self.py,
                self._cr2,
                self._radii["viol2_near"],
                self._radii["viol2_far"],
                self._radii["fpa2_near"],
                self._radii["fpa2_far"],
                self._radii["npa2_near"],
                self._radii["npa2_far"],
            )
            ev.nearest_idx = int(nearest)
            ev.nearest_d2 = int(nd2)
            ev.occupancy = int(occ)
            ev.collision = nd2 == 0
            if vidx >= 0:
                ev.comfort_violation = True
                ev.violated_person = self.persons[vidx].id
            ev.interaction = nd2 <= self._int2

        new_d = self._goal_dist()
        ev.goal_progress = 0 <= new_d < self._prev_goal_dist
        self.task.post_advance(self, ev)
        self._prev_goal_dist = self._goal_dist()
        done = ev.task_completed or self.timestep >= self.scenario.t_max
        return ev, done

    def _refresh_waypoints(self) -> None:
        # a walker standing on its waypoint draws the next leg before the
        # advance runs, so it is moving again the same tick; without this a
        # person spends one stationary tick per leg, and a stationary person
        # is the only thing the robot can actually step onto
        for i in range(self.n_persons):
            if not self.mobile[i]:
                continue
            if self.px[i] != self.wx[i] or self.py[i] != self.wy[i]:
                continue
            if self.task.owns_waypoint(i):
                self.task.on_person_arrived(self, i)
            else:
                self._redraw_waypoint(i)

    def _redraw_waypoint(self, i: int) -> None:
        wpool = self.scenario.waypoint_pools[i]
        here = (int(self.px[i]), int(self.py[i]))
        for _ in range(4):
            k = int(self.streams.motion.integers(len(wpool)))
            if tuple(wpool[k]) != here or len(wpool) == 1:
                break
        self.wx[i], self.wy[i] = wpool[k]

    def _handle_stalls(self, arrived) -> None:
        # 2 = wanted to move but boxed in; next to the robot the person steps
        # around it (the free neighbour gaining the most distance), the way a
        # pedestrian shoulders past an oncoming machine head-on; elsewhere a
        # re-roll keeps map geometry from freezing a wanderer
        for i in np.flatnonzero(arrived == 2):
            i = int(i)
            d2 = (int(self.px[i]) - self.rx) ** 2 + (int(self.py[i]) - self.ry) ** 2
            if d2 <= 2:
                best = None
                for cx, cy in (
                    (int(self.px[i]) + 1, int(self.py[i])),
                    (int(self.px[i]) - 1, int(self.py[i])),
                    (int(self.px[i]), int(self.py[i]) + 1),
                    (int(self.px[i]), int(self.py[i]) - 1),
                ):
                    if not self.grid.free((cx, cy)) or (cx == self.rx and cy == self.ry):
                        continue
                    gain = (cx - self.rx) ** 2 + (cy - self.ry) ** 2
                    if best is None or gain > best[0]:
                        best = (gain, cx, cy)
                if best is not None:
                    self.px[i], self.py[i] = best[1], best[2]
                    continue
            if not self.task.owns_waypoint(i):
                self._redraw_waypoint(i)


def person_step(idx: int, world: World, rng) -> tuple:
    """Advance a single person one draw; returns the new position.

    Same movement rule as the batched kernel: walk toward the waypoint with
    the speed-class probability, x axis before y, blocked steps fall through.
    """
    draws = np.array([rng.random()])
    move_ok = ((draws < world._move_p[idx : idx + 1]) & (world.mobile[idx : idx + 1] == 1)).astype(
        np.uint8
    )
    kernels.advance_persons(
        world.px[idx : idx + 1],
        world.py[idx : idx + 1],
        world.wx[idx : idx + 1],
        world.wy[idx : idx + 1],
        move_ok,
        world.grid.blocked,
        world.rx,
        world.ry,
    )
    return int(world.px[idx]), int(world.py[idx])
