"""Scenario configuration: validated, immutable run descriptions.

A scenario file is UTF-8 JSON. Loading fills documented defaults, checks
every invariant (roster attribute domains, audit coverage, task solvability
by graph search), and precomputes what the simulation needs: the grid, the
roster, per-target distance fields, and spawn/waypoint pools.

Bias injections are part of the config, not the code path: the file carries
the biased parameter values, and the active injections live in bias_seeds.
Injecting a seed only flips that switch, so injection is idempotent and a
config round-trips through it unchanged when the set is empty.
"""

from __future__ import annotations

import copy
import json

from .errors import ConfigError, UnsupportedAttributeError, UsageError
from .policy import EpsilonSchedule, RewardSpec
from .social import (
    GENDER_TERMS,
    RELATIONSHIP_TERMS,
    CostParams,
    FuzzyRuleTable,
    MembershipParams,
    Rule,
)
from .tasks import TASK_KINDS
from .world import SPEED_PROBS, GridMap, Person, bfs_distance_field

SCENARIO_SCHEMA_VERSION = 1

SCENARIO_IDS = ("cleaning", "guidance", "hospital")
AGE_GROUPS = ("child", "adult", "elderly")
MOBILITY_CLASSES = ("unimpaired", "impaired")
SKIN_TONES = ("type_1_2", "type_3_4", "type_5_6")
ACTIVITIES = ("walking", "standing")

BIAS_SEEDS = ("gender_rule", "priority_weights", "latency_prior")
# which injections make sense for which scenario type
_BIAS_VALID = {
    "gender_rule": set(SCENARIO_IDS),
    "priority_weights": {"guidance"},
    "latency_prior": {"hospital"},
}

_PROTECTED_DOMAIN = {
    "gender": GENDER_TERMS,
    "age_group": AGE_GROUPS,
    "mobility": MOBILITY_CLASSES,
    "skin_tone": SKIN_TONES,
}

_TOP_KEYS = {
    "schema_version",
    "scenario_id",
    "grid",
    "dock",
    "interaction_range",
    "t_max",
    "constraints",
    "reward",
    "learning",
    "audit",
    "membership",
    "rule_table",
    "costs",
    "roster",
    "spawn_pool",
    "waypoint_pool",
    "pool_exclude",
    "task",
    "bias",
    "bias_seeds",
}

_DEFAULTS = {
    "interaction_range": 3.0,
    "t_max": 200,
    "constraints": ["no_obstacle_entry"],
    "reward": {"w_goal": 1.0, "w_step": 0.55, "w_collision": 5.0, "w_comfort": 1.0},
    "learning": {
        "alpha": 0.2,
        "gamma": 0.95,
        "episodes": 3000,
        "epsilon": {"start": 1.0, "end": 0.05, "decay_frac": 0.8},
    },
    "audit": {
        "K": 6,
        "thresholds": {"gender": 0.2, "age_group": 0.2, "mobility": 0.2, "skin_tone": 0.2},
    },
    "membership": {},
    "costs": {},
    "spawn_pool": "free",
    "waypoint_pool": "free",
    "pool_exclude": [],
    "bias": {},
    "bias_seeds": [],
}


def _fill_defaults(doc: dict) -> dict:
    out = copy.deepcopy(doc)
    for key, val in _DEFAULTS.items():
        if key not in out:
            out[key] = copy.deepcopy(val)
        elif isinstance(val, dict):
            for k2, v2 in val.items():
                out[key].setdefault(k2, copy.deepcopy(v2))
    return out


def _cell(value, what: str) -> tuple:
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ConfigError(f"{what} must be an [x, y] pair, got {value!r}")
    return int(value[0]), int(value[1])


def _req(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where} is missing required field {key!r}")
    return d[key]


def _task_target_cells(scenario_id: str, task: dict, dock: tuple) -> list:
    if scenario_id == "cleaning":
        return [_cell(c, "dirty cell") for c in _req(task, "dirty_cells", "cleaning task")]
    if scenario_id == "guidance":
        return [dock, _cell(_req(task, "desk", "guidance task"), "desk")] + [
            _cell(c, "destination") for c in _req(task, "destinations", "guidance task")
        ]
    return [_cell(_req(task, "station", "hospital task"), "station")] + [
        _cell(c, "bed") for c in _req(task, "beds", "hospital task")
    ]


class ScenarioConfig:
    """One validated scenario, ready to build worlds from."""

    def __init__(self, doc: dict, require_coverage: bool = True):
        doc = _fill_defaults(doc)
        unknown = set(doc) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown scenario fields {sorted(unknown)}")
        if doc.get("schema_version") != SCENARIO_SCHEMA_VERSION:
            raise ConfigError(f"scenario schema_version must be {SCENARIO_SCHEMA_VERSION}")
        for key in ("scenario_id", "grid", "dock", "roster", "task", "rule_table"):
            if key not in doc:
                raise ConfigError(f"scenario is missing required field {key!r}")
        if doc["scenario_id"] not in SCENARIO_IDS:
            raise ConfigError(f"scenario_id must be one of {SCENARIO_IDS}, got {doc['scenario_id']!r}")
        self._doc = doc
        self.scenario_id = doc["scenario_id"]

        g = doc["grid"]
        self.grid = GridMap(
            int(_req(g, "width", "grid")),
            int(_req(g, "height", "grid")),
            [_cell(c, "obstacle") for c in g.get("obstacles", [])],
        )
        self.dock = _cell(doc["dock"], "dock")
        if not self.grid.free(self.dock):
            raise ConfigError(f"dock {self.dock} is not a free cell")

        self.membership = self._build_membership(doc["membership"])
        self.costs = CostParams(**doc["costs"])
        self._base_table = self._build_rules(doc["rule_table"])
        self.bias = doc["bias"]
        self.bias_seeds = self._check_bias_seeds(doc["bias_seeds"])

        self.persons = self._build_roster(doc["roster"], require_coverage)

        self.interaction_range = float(doc["interaction_range"])
        if self.interaction_range <= 0:
            raise ConfigError("interaction_range must be positive")
        self.t_max = int(doc["t_max"])
        if self.t_max < 1:
            raise ConfigError("t_max must be at least 1")
        self.constraints = list(doc["constraints"])
        self.reward = RewardSpec(**doc["reward"])
        learn = doc["learning"]
        self.alpha = float(learn["alpha"])
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError("alpha must lie in (0, 1]")
        self.gamma = float(learn["gamma"])
        self.episodes = int(learn["episodes"])
        self.epsilon = EpsilonSchedule(**learn["epsilon"])
        aud = doc["audit"]
        self.audit_k = int(aud["K"])
        if self.audit_k < 2:
            raise ConfigError("audit K must be at least 2")
        self.thresholds = {k: float(v) for k, v in aud["thresholds"].items()}
        for feat in _PROTECTED_DOMAIN:
            if feat not in self.thresholds:
                raise ConfigError(f"audit thresholds missing {feat!r}")
            if not (0.0 < self.thresholds[feat] < 1.0):
                raise ConfigError(f"audit threshold for {feat!r} must lie in (0, 1)")

        task = doc["task"]
        if task.get("kind") != self.scenario_id:
            raise ConfigError(
                f"task kind {task.get('kind')!r} must match scenario_id {self.scenario_id!r}"
            )
        self._task_cfg = task
        self.emergency_corridor = frozenset(
            _cell(c, "corridor cell") for c in task.get("emergency_corridor", [])
        )
        if "no_emergency_corridor_entry" in self.constraints and not self.emergency_corridor:
            raise ConfigError("corridor constraint configured but no emergency_corridor cells")
        probe = TASK_KINDS[self.scenario_id](self._make_task_cfg())
        self.phase_count = probe.phase_count
        # hospital encodes the emergency bit in the upper half of the phase range
        self._em_threshold = probe.base_phases if self.scenario_id == "hospital" else None

        self._build_pools_and_fields(doc)

    # ---------- construction helpers ----------

    def _build_membership(self, cfg: dict) -> MembershipParams:
        kwargs = {}
        for key in ("distance_slope", "distance_center"):
            if key in cfg:
                kwargs[key] = float(cfg[key])
        for key in ("relationship_centers", "relationship_spreads"):
            if key in cfg:
                table = {k: float(v) for k, v in cfg[key].items()}
                if set(table) != set(RELATIONSHIP_TERMS):
                    raise ConfigError(f"membership {key} must cover exactly {RELATIONSHIP_TERMS}")
                kwargs[key] = table
        return MembershipParams(**kwargs)

    def _build_rules(self, rows) -> FuzzyRuleTable:
        rules = []
        for row in rows:
            rules.append(
                Rule(
                    gender=row["gender"],
                    distance=row["distance"],
                    relationship=row["relationship"],
                    npa_radius=float(row["npa_radius"]),
                    fpa_radius=float(row["fpa_radius"]),
                    npa_allowed=bool(row["npa_allowed"]),
                )
            )
        return FuzzyRuleTable(rules)

    def _check_bias_seeds(self, seeds) -> tuple:
        seen = []
        for s in seeds:
            if s not in BIAS_SEEDS:
                raise UsageError(f"unknown bias seed {s!r}; valid seeds are {BIAS_SEEDS}")
            if self.scenario_id not in _BIAS_VALID[s]:
                raise UsageError(f"bias seed {s!r} does not apply to a {self.scenario_id} scenario")
            if s == "gender_rule":
                val = self.bias.get("gender_rule", {"gender": "female"})
                if val.get("gender") not in GENDER_TERMS:
                    raise ConfigError("bias.gender_rule.gender must name a supported gender term")
            else:
                if s not in self.bias:
                    raise ConfigError(f"bias seed {s!r} active but bias.{s} values are missing")
            if s not in seen:
                seen.append(s)
        return tuple(sorted(seen))

    def _build_roster(self, rows, require_coverage: bool) -> list:
        persons = []
        ids = set()
        for row in rows:
            pid = str(_req(row, "id", "roster entry"))
            if pid in ids:
                raise ConfigError(f"duplicate person id {pid!r}")
            ids.add(pid)
            for key in ("relationship_degree", "speed_class", "activity"):
                _req(row, key, f"person {pid!r}")
            for feat, domain in _PROTECTED_DOMAIN.items():
                if _req(row, feat, f"person {pid!r}") not in domain:
                    if feat == "gender":
                        raise UnsupportedAttributeError(
                            f"person {pid!r}: gender {row[feat]!r} has no membership model"
                        )
                    raise ConfigError(f"person {pid!r}: {feat} must be one of {domain}")
            if row["relationship_degree"] not in RELATIONSHIP_TERMS:
                raise ConfigError(f"person {pid!r}: unknown relationship_degree")
            if row["speed_class"] not in SPEED_PROBS:
                raise ConfigError(f"person {pid!r}: unknown speed_class")
            if row["activity"] not in ACTIVITIES:
                raise ConfigError(f"person {pid!r}: activity must be one of {ACTIVITIES}")
            if row["mobility"] == "impaired" and row["speed_class"] != "slow":
                raise ConfigError(f"person {pid!r}: impaired mobility requires the slow speed class")
            if "relationship_score" in row:
                score = float(row["relationship_score"])
            else:
                center = self.membership.relationship_centers[row["relationship_degree"]]
                score = center + float(row.get("relationship_offset", 0.0))
            if not (0.0 <= score <= 1.0):
                raise ConfigError(f"person {pid!r}: relationship score {score} outside [0, 1]")
            spawn = row.get("spawn_cell")
            if spawn is not None:
                spawn = _cell(spawn, f"person {pid!r} spawn")
                if not self.grid.free(spawn):
                    raise ConfigError(f"person {pid!r} spawn {spawn} is not a free cell")
            persons.append(
                Person(
                    id=pid,
                    gender=row["gender"],
                    age_group=row["age_group"],
                    mobility=row["mobility"],
                    skin_tone=row["skin_tone"],
                    relationship_degree=row["relationship_degree"],
                    relationship_score=score,
                    speed_class=row["speed_class"],
                    activity=row["activity"],
                    spawn_cell=spawn,
                )
            )
        if require_coverage:
            for feat in _PROTECTED_DOMAIN:
                cats = set(getattr(p, feat) for p in persons)
                if len(cats) < 2:
                    raise ConfigError(
                        f"audit coverage: roster must span at least 2 {feat} categories, found {sorted(cats)}"
                    )
        return persons

    def _build_pools_and_fields(self, doc: dict) -> None:
        targets = _task_target_cells(self.scenario_id, self._task_cfg, self.dock)
        dock_field = bfs_distance_field(self.grid, self.dock)
        for t in targets:
            if not self.grid.free(t):
                raise ConfigError(f"task target {t} is not a free cell")
            if dock_field[t[1], t[0]] < 0:
                raise ConfigError(f"task solvable: no collision-free path from {self.dock} to {t}")
        self.dist_fields = {self.dock: dock_field}
        for t in targets:
            if t not in self.dist_fields:
                self.dist_fields[t] = bfs_distance_field(self.grid, t)

        special = set(targets) | {self.dock} | set(self.emergency_corridor)
        special |= {_cell(c, "pool exclusion") for c in doc["pool_exclude"]}
        reachable = [
            c for c in self.grid.free_cells() if dock_field[c[1], c[0]] >= 0 and c not in special
        ]

        def resolve(pool, what):
            if pool == "free":
                return list(reachable)
            cells = [_cell(c, what) for c in pool]
            for c in cells:
                if not self.grid.free(c):
                    raise ConfigError(f"{what} {c} is not a free cell")
                if dock_field[c[1], c[0]] < 0:
                    raise ConfigError(f"{what} {c} is unreachable from the dock")
            return cells

        self.spawn_pool = resolve(doc["spawn_pool"], "spawn cell")
        shared = resolve(doc["waypoint_pool"], "waypoint")
        self.waypoint_pools = []
        walkers = 0
        unspawned = 0
        for i, row in enumerate(doc["roster"]):
            own = row.get("waypoints")
            self.waypoint_pools.append(resolve(own, f"person {row['id']!r} waypoint") if own else shared)
            if self.persons[i].activity == "walking":
                walkers += 1
                if not self.waypoint_pools[i]:
                    raise ConfigError(f"person {row['id']!r} walks but has an empty waypoint set")
            if self.persons[i].spawn_cell is None:
                unspawned += 1
        if unspawned > len(self.spawn_pool):
            raise ConfigError(
                f"spawn pool has {len(self.spawn_pool)} cells for {unspawned} unplaced persons"
            )

    def _make_task_cfg(self) -> dict:
        cfg = dict(self._task_cfg)
        if "priority_weights" in self.bias_seeds:
            cfg["priority_weights"] = dict(self.bias["priority_weights"])
        elif "latency_prior" in self.bias_seeds:
            cfg["priority_weights"] = dict(self.bias["latency_prior"])
        else:
            cfg["priority_weights"] = None
        return cfg

    # ---------- the surface the simulation reads ----------

    @property
    def rule_table(self) -> FuzzyRuleTable:
        if "gender_rule" in self.bias_seeds:
            target = self.bias.get("gender_rule", {"gender": "female"})["gender"]
            return self._base_table.with_closed_npa(target)
        return self._base_table

    def make_task(self):
        return TASK_KINDS[self.scenario_id](self._make_task_cfg())

    def emergency_from_phase(self, phase: int) -> bool:
        return self._em_threshold is not None and phase >= self._em_threshold

    def to_doc(self) -> dict:
        return copy.deepcopy(self._doc)

    def __eq__(self, other) -> bool:
        return isinstance(other, ScenarioConfig) and self._doc == other._doc

    def __repr__(self) -> str:
        return f"ScenarioConfig({self.scenario_id!r}, bias_seeds={list(self.bias_seeds)})"


def load(path) -> ScenarioConfig:
    """Load and validate a scenario file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file {path} does not exist")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: line {e.lineno}: not valid JSON ({e.msg})") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: scenario file must hold a JSON object")
    return ScenarioConfig(doc)


def inject_bias(config: ScenarioConfig, seeds) -> ScenarioConfig:
    """Copy of the config with the given bias seeds switched on."""
    doc = config.to_doc()
    merged = sorted(set(doc.get("bias_seeds", [])) | set(seeds))
    for s in merged:
        if s not in BIAS_SEEDS:
            raise UsageError(f"unknown bias seed {s!r}; valid seeds are {BIAS_SEEDS}")
        if config.scenario_id not in _BIAS_VALID[s]:
            raise UsageError(f"bias seed {s!r} does not apply to a {config.scenario_id} scenario")
    doc["bias_seeds"] = merged
    return ScenarioConfig(doc)
