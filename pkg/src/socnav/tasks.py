"""Task state machines: what the robot is trying to do this episode.

Each task exposes a small integer phase (part of the learned state), a static
navigation target per phase, and hooks into the world's step loop. Service
tasks record latency on the step the robot reaches the requester.
"""

from __future__ import annotations

import math

import numpy as np

SCHEDULED, SUMMONED, ACTIVE, GUIDING, DONE = range(5)


class CleaningTask:
    """Visit an ordered list of dirty cells; a cell is cleaned by standing on it."""

    def __init__(self, cfg):
        self.targets = [tuple(c) for c in cfg["dirty_cells"]]
        self.phase_count = len(self.targets)
        self.k = 0

    def reset(self, world) -> None:
        self.k = 0

    def phase_id(self) -> int:
        return min(self.k, self.phase_count - 1)

    def target_cell(self):
        return self.targets[min(self.k, self.phase_count - 1)]

    def target_cells(self):
        return list(self.targets)

    def pre_advance(self, world) -> None:
        pass

    def move_gate(self, world):
        return None

    def forced_move(self, world):
        return None

    def owns_waypoint(self, idx: int) -> bool:
        return False

    def on_person_arrived(self, world, idx: int) -> None:
        pass

    def post_advance(self, world, ev) -> None:
        if self.k < len(self.targets) and (world.rx, world.ry) == self.targets[self.k]:
            self.k += 1
            if self.k == len(self.targets):
                ev.task_completed = True

    @property
    def emergency_active(self) -> bool:
        return False


class GuidanceTask:
    """Serve walk-up requests at a desk, then guide each requester to a goal.

    Requesters are drawn uniformly from the roster each episode. A summoned
    person walks to the desk and waits; the robot seeks the desk, serves the
    active requester on coming within interaction range, then leads them to
    the request's destination while they follow at a short distance.
    """

    def __init__(self, cfg):
        self.desk = tuple(cfg["desk"])
        self.dests = [tuple(c) for c in cfg["destinations"]]
        self.n_requests = int(cfg.get("requests_per_episode", 2))
        self.window = int(cfg.get("request_window", 25))
        self.follow_gate_d2 = float(cfg.get("follow_gate_d2", 8.0))
        self.follow_min_d2 = float(cfg.get("follow_min_d2", 2.0))
        self._ring_span = int(math.ceil(math.sqrt(self.follow_gate_d2)))
        self.priority_weights = cfg.get("priority_weights")  # None means first come first served
        self.phase_count = 2 + len(self.dests)
        self._dock = None
        self._ring = []
        self.requests = []
        self.active = -1
        self.guiding = -1

    def reset(self, world) -> None:
        self._dock = world.scenario.dock
        if not self._ring:
            # waiting bench: the column just west of the desk, so queued
            # requesters mill off the robot's approach axis
            dx0, dy0 = self.desk
            for cy in (dy0 - 1, dy0, dy0 + 1):
                cell = (dx0 - 1, cy)
                if world.grid.in_bounds(cell) and not world.grid.blocked[cy, dx0 - 1]:
                    self._ring.append(cell)
            if not self._ring:
                self._ring.append(self.desk)
        ev = world.streams.events
        people = ev.choice(world.n_persons, size=self.n_requests, replace=False)
        times = ev.integers(0, self.window + 1, size=self.n_requests)
        dests = ev.integers(0, len(self.dests), size=self.n_requests)
        self.requests = [
            {"person": int(people[i]), "t": int(times[i]), "dest": int(dests[i]), "status": SCHEDULED}
            for i in range(self.n_requests)
        ]
        self.active = -1
        self.guiding = -1

    def phase_id(self) -> int:
        if self.guiding >= 0:
            return 2 + self.requests[self.guiding]["dest"]
        if self.active >= 0:
            return 1
        return 0

    def target_cell(self):
        if self.guiding >= 0:
            return self.dests[self.requests[self.guiding]["dest"]]
        if self.active >= 0:
            return self.desk
        return self._dock

    def target_cells(self):
        return [self._dock, self.desk] + list(self.dests)

    def _follow_ring(self, world):
        # cells a trailing requester mills about: a distance band around the
        # robot, tracking it as it moves; the band floor keeps the follower
        # clear of anyone's personal area so trailing is never itself rude
        cells = []
        for dx in range(-self._ring_span, self._ring_span + 1):
            for dy in range(-self._ring_span, self._ring_span + 1):
                d2 = dx * dx + dy * dy
                if d2 < self.follow_min_d2 or d2 > self.follow_gate_d2:
                    continue
                c = (world.rx + dx, world.ry + dy)
                if world.grid.free(c):
                    cells.append(c)
        return cells

    def _draw_follow_cell(self, world, j) -> None:
        ring = self._follow_ring(world)
        here = (int(world.px[j]), int(world.py[j]))
        ring = [c for c in ring if c != here]
        if ring:
            k = int(world.streams.motion.integers(len(ring)))
            world.wx[j], world.wy[j] = ring[k]
        else:
            world.wx[j], world.wy[j] = world.rx, world.ry

    def pre_advance(self, world) -> None:
        if self.guiding < 0:
            return
        j = self.requests[self.guiding]["person"]
        d2 = (world.px[j] - world.rx) ** 2 + (world.py[j] - world.ry) ** 2
        wd2 = (world.wx[j] - world.rx) ** 2 + (world.wy[j] - world.ry) ** 2
        if d2 > self.follow_gate_d2:
            # too far behind: head straight for the robot
            world.wx[j], world.wy[j] = world.rx, world.ry
        elif wd2 > self.follow_gate_d2 or wd2 < self.follow_min_d2:
            # the robot moved on and the old milling spot no longer trails
            # it; a static follower next to a static robot would pin the
            # state key, so the follower always has somewhere fresh to drift
            self._draw_follow_cell(world, j)

    def move_gate(self, world):
        return None

    def forced_move(self, world):
        # a followed guide moves every step, otherwise slow walkers would
        # lose their guide
        if self.guiding < 0:
            return None
        forced = np.zeros(world.n_persons, dtype=np.uint8)
        forced[self.requests[self.guiding]["person"]] = 1
        return forced

    def owns_waypoint(self, idx: int) -> bool:
        for r in self.requests:
            if r["person"] == idx and r["status"] in (SUMMONED, ACTIVE, GUIDING):
                return True
        return False

    def on_person_arrived(self, world, idx: int) -> None:
        # a requester at the desk mills about the adjacent cells rather than
        # standing frozen; a static person next to a static robot would pin
        # the state and a greedy rollout could idle there to the horizon
        for r in self.requests:
            if r["person"] != idx:
                continue
            if r["status"] in (SUMMONED, ACTIVE):
                here = (int(world.px[idx]), int(world.py[idx]))
                ring = [c for c in self._ring if c != here]
                if ring:
                    k = int(world.streams.motion.integers(len(ring)))
                    world.wx[idx], world.wy[idx] = ring[k]
            elif r["status"] == GUIDING:
                self._draw_follow_cell(world, idx)

    def _select_next(self, world) -> None:
        pending = [i for i, r in enumerate(self.requests) if r["status"] == SUMMONED]
        if not pending:
            self.active = -1
            return
        if self.priority_weights:
            w = self.priority_weights

            def key(i):
                g = world.persons[self.requests[i]["person"]].gender
                return (w.get(g, 0.0), self.requests[i]["t"], i)

        else:

            def key(i):
                return (self.requests[i]["t"], i)

        self.active = min(pending, key=key)
        self.requests[self.active]["status"] = ACTIVE

    def post_advance(self, world, ev) -> None:
        t = world.timestep
        for r in self.requests:
            if r["status"] == SCHEDULED and t >= r["t"]:
                r["status"] = SUMMONED
                j = r["person"]
                k = int(world.streams.motion.integers(len(self._ring)))
                world.wx[j], world.wy[j] = self._ring[k]
                world.mobile[j] = 1
        if self.active < 0 and self.guiding < 0:
            self._select_next(world)
        if self.active >= 0:
            r = self.requests[self.active]
            j = r["person"]
            d2 = int((world.px[j] - world.rx) ** 2 + (world.py[j] - world.ry) ** 2)
            dj2 = int((world.px[j] - self.desk[0]) ** 2 + (world.py[j] - self.desk[1]) ** 2)
            # service happens at the desk: the requester must have made it
            # there (or be queued beside it) before proximity counts. The
            # robot also never opens service from inside somebody's personal
            # area; it waits for a clear step, like pausing at a queue
            if d2 <= world._int2 and dj2 <= 2 and not ev.comfort_violation and not ev.collision:
                ev.service_latency = t - r["t"]
                ev.served_idx = j
                ev.interaction = True
                r["status"] = GUIDING
                self.guiding = self.active
                self.active = -1
                world.mobile[j] = 1
        if self.guiding >= 0:
            r = self.requests[self.guiding]
            if (world.rx, world.ry) == self.dests[r["dest"]]:
                r["status"] = DONE
                j = r["person"]
                world.mobile[j] = 1
                wpool = world.scenario.waypoint_pools[j]
                k = int(world.streams.motion.integers(len(wpool)))
                world.wx[j], world.wy[j] = wpool[k]
                self.guiding = -1
                self._select_next(world)
        if all(r["status"] == DONE for r in self.requests):
            ev.task_completed = True

    @property
    def emergency_active(self) -> bool:
        return False


class HospitalTask:
    """Deliver supplies from a station to requested beds, avoiding emergencies.

    Each episode schedules deliveries to a subset of beds. The robot carries
    one item at a time and restocks at the station between deliveries. A
    corridor can go into an emergency state for a fixed duration, during
    which a constraint forbids entering it.
    """

    def __init__(self, cfg):
        self.station = tuple(cfg["station"])
        self.beds = [tuple(c) for c in cfg["beds"]]
        self.bed_patient = [int(i) for i in cfg["bed_patients"]]
        self.n_deliveries = int(cfg.get("deliveries_per_episode", 3))
        self.window = int(cfg.get("request_window", 30))
        self.corridor = frozenset(tuple(c) for c in cfg.get("emergency_corridor", []))
        self.p_emergency = float(cfg.get("emergency_rate", 0.0))
        self.emergency_duration = int(cfg.get("emergency_duration", 30))
        self.deliver_d2 = float(cfg.get("deliver_d2", 2.0))
        self.priority_weights = cfg.get("priority_weights")
        self.base_phases = 1 + len(self.beds)
        self.phase_count = 2 * self.base_phases
        self.requests = []
        self.active = -1
        self.loaded = True
        self._em_left = 0

    def reset(self, world) -> None:
        ev = world.streams.events
        beds = ev.choice(len(self.beds), size=self.n_deliveries, replace=False)
        times = ev.integers(0, self.window + 1, size=self.n_deliveries)
        self.requests = [
            {"bed": int(beds[i]), "t": int(times[i]), "status": SCHEDULED}
            for i in range(self.n_deliveries)
        ]
        self.active = -1
        self.loaded = True
        self._em_left = 0

    @property
    def emergency_active(self) -> bool:
        return self._em_left > 0

    def phase_id(self) -> int:
        base = 1 + self.requests[self.active]["bed"] if self.active >= 0 else 0
        return base + (self.base_phases if self.emergency_active else 0)

    def target_cell(self):
        if self.active >= 0:
            return self.beds[self.requests[self.active]["bed"]]
        return self.station

    def target_cells(self):
        return [self.station] + list(self.beds)

    def pre_advance(self, world) -> None:
        pass

    def move_gate(self, world):
        return None

    def forced_move(self, world):
        return None

    def owns_waypoint(self, idx: int) -> bool:
        return False

    def on_person_arrived(self, world, idx: int) -> None:
        pass

    def _select_next(self, world) -> None:
        pending = [i for i, r in enumerate(self.requests) if r["status"] == SUMMONED]
        if not pending or not self.loaded:
            self.active = -1
            return
        if self.priority_weights:
            w = self.priority_weights

            def key(i):
                p = world.persons[self.bed_patient[self.requests[i]["bed"]]]
                return (w.get(p.gender, 0.0), self.requests[i]["t"], i)

        else:

            def key(i):
                return (self.requests[i]["t"], i)

        self.active = min(pending, key=key)
        self.requests[self.active]["status"] = ACTIVE

    def post_advance(self, world, ev) -> None:
        t = world.timestep
        for r in self.requests:
            if r["status"] == SCHEDULED and t >= r["t"]:
                r["status"] = SUMMONED
        if not self.loaded and (world.rx, world.ry) == self.station:
            self.loaded = True
        if self.active < 0:
            self._select_next(world)
        if self.active >= 0:
            r = self.requests[self.active]
            bx, by = self.beds[r["bed"]]
            d2 = (world.rx - bx) ** 2 + (world.ry - by) ** 2
            if d2 <= self.deliver_d2:
                ev.service_latency = t - r["t"]
                ev.served_idx = self.bed_patient[r["bed"]]
                ev.interaction = True
                r["status"] = DONE
                self.active = -1
                self.loaded = False
        if all(r["status"] == DONE for r in self.requests):
            ev.task_completed = True
        # emergency lifecycle advances last so next step's mask sees it
        if self._em_left > 0:
            self._em_left -= 1
        elif self.p_emergency > 0.0:
            if world.streams.events.random() < self.p_emergency:
                self._em_left = self.emergency_duration


TASK_KINDS = {
    "cleaning": CleaningTask,
    "guidance": GuidanceTask,
    "hospital": HospitalTask,
}
