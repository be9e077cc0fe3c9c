"""Constrained tabular Q-learning over compact integer state keys.

A state key packs (task phase, robot cell, quantized nearest-person offset,
comfort-zone occupancy) into one int. Action constraints are realized as
masking, both at action selection and inside the update's max over
successor actions; there is one Q table, no second "constrained" copy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ConfigError, SchemaError
from .rng import RunStreams
from .world import ACTION_DELTAS, ACTION_NAMES, Action, StepEvents, World

N_ACTIONS = 5
N_OFFSETS = 26
N_OCC = 3
POLICY_FORMAT_VERSION = 1

# action-index tuples for every 5-bit allowed mask
ALLOWED_LISTS = [tuple(a for a in range(N_ACTIONS) if (m >> a) & 1) for m in range(32)]
ALL_ALLOWED = 31


def encode_state_key(cell: int, offset: int, occupancy: int, phase: int, n_cells: int) -> int:
    """Pack state-key fields into one int; injective for fixed n_cells."""
    return ((phase * n_cells + cell) * N_OFFSETS + offset) * N_OCC + occupancy


def decode_state_key(key: int, n_cells: int) -> tuple[int, int, int, int]:
    """Inverse of encode_state_key: (cell, offset, occupancy, phase)."""
    occ = key % N_OCC
    rest = key // N_OCC
    off = rest % N_OFFSETS
    rest //= N_OFFSETS
    cell = rest % n_cells
    phase = rest // n_cells
    return cell, off, occ, phase


@dataclass(frozen=True)
class RewardSpec:
    w_goal: float
    w_step: float
    w_collision: float
    w_comfort: float

    def __post_init__(self):
        for name in ("w_goal", "w_step", "w_collision", "w_comfort"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


def reward(spec: RewardSpec, ev: StepEvents) -> float:
    r = -spec.w_step
    if ev.goal_progress:
        r += spec.w_goal
    if ev.collision:
        r -= spec.w_collision
    if ev.comfort_violation:
        r -= spec.w_comfort
    return r


class ConstraintSet:
    """Named action constraints compiled to per-cell bitmasks.

    Masks bind at selection and at backup. Stay is always allowed; a
    constraint that would forbid it is a configuration error.
    """

    def __init__(self, names, scenario):
        self.names = list(names)
        self.scenario = scenario
        grid = scenario.grid
        n = grid.width * grid.height
        self._static = [ALL_ALLOWED] * n
        self._emergency = [ALL_ALLOWED] * n
        corridor = scenario.emergency_corridor
        for name in self.names:
            if name == "no_obstacle_entry":
                for cell in range(n):
                    x, y = cell % grid.width, cell // grid.width
                    bits = 0
                    for a in range(N_ACTIONS):
                        dx, dy = ACTION_DELTAS[Action(a)]
                        if (dx or dy) and not grid.free((x + dx, y + dy)):
                            continue
                        bits |= 1 << a
                    self._static[cell] &= bits
            elif name == "no_emergency_corridor_entry":
                for cell in range(n):
                    x, y = cell % grid.width, cell // grid.width
                    bits = 0
                    for a in range(N_ACTIONS):
                        dx, dy = ACTION_DELTAS[Action(a)]
                        tx, ty = x + dx, y + dy
                        if not grid.free((tx, ty)):
                            tx, ty = x, y  # bumps resolve to stay
                        if (tx, ty) in corridor and (tx, ty) != (x, y):
                            continue
                        bits |= 1 << a
                    self._emergency[cell] &= bits
            else:
                raise ConfigError(f"unknown constraint {name!r}")
        stay_bit = 1 << Action.STAY
        for cell in range(n):
            if not (self._static[cell] & stay_bit) or not (self._emergency[cell] & stay_bit):
                raise ConfigError("a constraint forbids Stay, which must always be allowed")

    def allowed_bits(self, cell: int, emergency: bool) -> int:
        bits = self._static[cell]
        if emergency:
            bits &= self._emergency[cell]
        return bits

    def allowed_actions(self, state_key: int) -> list[Action]:
        """Allowed actions for a packed state key."""
        sc = self.scenario
        cell, _, _, phase = decode_state_key(state_key, sc.grid.width * sc.grid.height)
        bits = self.allowed_bits(cell, sc.emergency_from_phase(phase))
        return [Action(a) for a in ALLOWED_LISTS[bits]]

    def predicate(self, name: str):
        """The named constraint as a (state_key, action) -> bool callable."""
        if name not in self.names:
            raise KeyError(name)
        sc = self.scenario
        n_cells = sc.grid.width * sc.grid.height

        def admits(state_key: int, action: Action) -> bool:
            cell, _, _, phase = decode_state_key(state_key, n_cells)
            if name == "no_obstacle_entry":
                bits = self._static[cell]
            else:
                bits = self._emergency[cell] if sc.emergency_from_phase(phase) else ALL_ALLOWED
            return bool((bits >> int(action)) & 1)

        return admits


class QPolicy:
    """Q table plus the discount it was trained with."""

    def __init__(self, gamma: float):
        if not (0.0 <= gamma <= 1.0):
            raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
        self.gamma = float(gamma)
        self.q: dict[int, list[float]] = {}

    def copy(self) -> "QPolicy":
        out = QPolicy(self.gamma)
        out.q = {k: list(v) for k, v in self.q.items()}
        return out

    def row(self, key: int) -> list[float]:
        r = self.q.get(key)
        if r is None:
            r = [0.0] * N_ACTIONS
            self.q[key] = r
        return r

    def value(self, key: int, action: int) -> float:
        r = self.q.get(key)
        return r[action] if r is not None else 0.0

    def to_json(self) -> str:
        entries = []
        for key in sorted(self.q):
            row = self.q[key]
            for a in range(N_ACTIONS):
                entries.append([key, ACTION_NAMES[a], row[a]])
        doc = {"format_version": POLICY_FORMAT_VERSION, "gamma": self.gamma, "entries": entries}
        return json.dumps(doc, separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QPolicy":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"policy file is not valid JSON: {e}") from e
        if not isinstance(doc, dict) or doc.get("format_version") != POLICY_FORMAT_VERSION:
            raise SchemaError("unsupported policy format_version")
        out = cls(doc["gamma"])
        name_to_idx = {n: i for i, n in enumerate(ACTION_NAMES)}
        for entry in doc["entries"]:
            key, action, value = entry
            if action not in name_to_idx:
                raise SchemaError(f"unknown action {action!r} in policy file")
            out.row(int(key))[name_to_idx[action]] = float(value)
        return out


@dataclass(frozen=True)
class EpsilonSchedule:
    """Linear decay from start to end over the first decay_frac of episodes."""

    start: float = 1.0
    end: float = 0.05
    decay_frac: float = 0.8

    def at(self, episode: int, total_episodes: int) -> float:
        steps = max(1, int(round(self.decay_frac * total_episodes)))
        f = min(1.0, episode / steps)
        return self.start + (self.end - self.start) * f


def select_action(row, eps: float, allowed, rng) -> int:
    """Epsilon-greedy over the allowed actions; greedy ties take the lowest index."""
    if eps > 0.0 and rng.random() < eps:
        return allowed[int(rng.integers(len(allowed)))]
    best = allowed[0]
    bv = row[best]
    for a in allowed[1:]:
        v = row[a]
        if v > bv:
            bv = v
            best = a
    return best


def q_update(policy: QPolicy, key: int, action: int, r: float, next_key: int, next_allowed, alpha: float, terminal: bool) -> float:
    """One tabular backup; the successor max runs over allowed actions only."""
    if terminal:
        target = r
    else:
        nrow = policy.q.get(next_key)
        if nrow is None:
            best = 0.0
        else:
            best = nrow[next_allowed[0]]
            for a in next_allowed[1:]:
                if nrow[a] > best:
                    best = nrow[a]
        target = r + policy.gamma * best
    row = policy.row(key)
    row[action] += alpha * (target - row[action])
    return row[action]


def run_episode(world: World, policy: QPolicy, cset: ConstraintSet, spec: RewardSpec, eps: float, explore_rng, alpha: float, learn: bool, augment=None, on_step=None):
    """Run one episode; returns (return, violations, collisions, success, steps).

    With learn=False the table is read-only and greedy ties are identical to
    the training-time rule. augment applies a penalty to experiences matched
    to flagged clusters; on_step sees every transition.
    """
    world.reset()
    n_cells = world.grid.width * world.grid.height
    cell, off, occ, phase = world.observe()
    key = encode_state_key(cell, off, occ, phase, n_cells)
    q = policy.q
    task = world.task
    empty = [0.0] * N_ACTIONS
    total = 0.0
    violations = 0
    collisions = 0
    success = False
    steps = 0
    done = False
    while not done:
        bits = cset.allowed_bits(cell, task.emergency_active)
        allowed = ALLOWED_LISTS[bits]
        row = q.get(key)
        action = select_action(row if row is not None else empty, eps, allowed, explore_rng)
        ev, done = world.step(action)
        cell, off, occ, phase = world.observe()
        next_key = encode_state_key(cell, off, occ, phase, n_cells)
        r = reward(spec, ev)
        if augment is not None:
            r = augment.augmented_reward(r, ev)
        if learn:
            nbits = cset.allowed_bits(cell, task.emergency_active)
            q_update(policy, key, action, r, next_key, ALLOWED_LISTS[nbits], alpha, done and ev.task_completed)
        if on_step is not None:
            on_step(world, key, action, bits, ev, r, next_key)
        total += r
        steps += 1
        if ev.comfort_violation:
            violations += 1
        if ev.collision:
            collisions += 1
        if ev.task_completed:
            success = True
        key = next_key
    return total, violations, collisions, success, steps


def train(scenario, episodes: int, seed: int, *, base_policy: QPolicy | None = None, augment=None, on_step=None, epsilon: EpsilonSchedule | None = None):
    """Train a policy on a scenario; fully determined by (scenario, seed, args).

    Returns (policy, metrics) where metrics holds per-episode lists: return,
    violations, collisions, success.
    """
    if episodes <= 0:
        raise ConfigError("episodes must be positive")
    streams = RunStreams(seed)
    world = World(scenario, streams)
    cset = ConstraintSet(scenario.constraints, scenario)
    spec = scenario.reward
    sched = epsilon if epsilon is not None else scenario.epsilon
    policy = base_policy.copy() if base_policy is not None else QPolicy(scenario.gamma)
    if base_policy is not None and base_policy.gamma != scenario.gamma:
        raise ConfigError("base policy gamma does not match the scenario")
    alpha = scenario.alpha
    metrics = {"return": [], "violations": [], "collisions": [], "success": []}
    for ep in range(episodes):
        eps = sched.at(ep, episodes)
        total, viol, coll, succ, _ = run_episode(
            world, policy, cset, spec, eps, streams.explore, alpha, True, augment, on_step
        )
        metrics["return"].append(total)
        metrics["violations"].append(viol)
        metrics["collisions"].append(coll)
        metrics["success"].append(bool(succ))
    return policy, metrics


def simulate(scenario, policy: QPolicy, episodes: int, seed: int, *, record: bool = True, on_step=None):
    """Greedy rollouts of a trained policy; optionally records experiences.

    Returns (experiences, metrics). Experiences are plain dicts matching the
    log schema, in step order.
    """
    if episodes <= 0:
        raise ConfigError("episodes must be positive")
    streams = RunStreams(seed)
    world = World(scenario, streams)
    cset = ConstraintSet(scenario.constraints, scenario)
    spec = scenario.reward
    experiences: list[dict] = []
    metrics = {"return": [], "violations": [], "collisions": [], "success": []}
    episode_box = [0]

    def recorder(w: World, key, action, bits, ev: StepEvents, r, next_key):
        if record and ev.nearest_idx >= 0:
            p = w.persons[ev.nearest_idx]
            experiences.append(
                {
                    "episode": episode_box[0],
                    "timestep": w.timestep,
                    "scenario_id": w.scenario.scenario_id,
                    "state_key": key,
                    "action": ACTION_NAMES[action],
                    "reward": r,
                    "nearest_person_id": p.id,
                    "relative_distance": math.sqrt(ev.nearest_d2),
                    "comfort_violation": bool(ev.comfort_violation),
                    "collision": bool(ev.collision),
                    "robot_speed": 1 if ev.robot_moved else 0,
                    "service_latency": int(ev.service_latency),
                    "interaction_occurred": bool(ev.interaction),
                    "protected": {
                        "gender": p.gender,
                        "age_group": p.age_group,
                        "mobility": p.mobility,
                        "skin_tone": p.skin_tone,
                    },
                }
            )
        if on_step is not None:
            on_step(w, key, action, bits, ev, r, next_key)

    for ep in range(episodes):
        episode_box[0] = ep
        total, viol, coll, succ, _ = run_episode(
            world, policy, cset, spec, 0.0, streams.explore, 0.0, False, None, recorder
        )
        metrics["return"].append(total)
        metrics["violations"].append(viol)
        metrics["collisions"].append(coll)
        metrics["success"].append(bool(succ))
    return experiences, metrics
