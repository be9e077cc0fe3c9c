"""Fuzzy comfort model: membership functions, rule table, personal areas.

A person's personal space has two zones, a near area (npa) and a far area
(fpa). The rule table maps fuzzified attributes (gender term, distance term,
relationship term) to zone radii and to whether the near area may be entered
at all. A seeded bias closes the near area for one gender, which silently
widens the zone that counts as a violation for that group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, UnsupportedAttributeError

GENDER_TERMS = ("male", "female")
DISTANCE_TERMS = ("near", "far")
RELATIONSHIP_TERMS = ("familiar", "acquaintance", "stranger")


@dataclass(frozen=True)
class MembershipParams:
    """Shape parameters for the three membership families."""

    distance_slope: float = 2.0
    distance_center: float = 1.5
    relationship_centers: dict = field(
        default_factory=lambda: {"familiar": 0.2, "acquaintance": 0.5, "stranger": 0.8}
    )
    relationship_spreads: dict = field(
        default_factory=lambda: {"familiar": 0.15, "acquaintance": 0.15, "stranger": 0.15}
    )


@dataclass(frozen=True)
class PersonalArea:
    npa_radius: float
    fpa_radius: float
    npa_allowed: bool

    def violation_radius(self) -> float:
        """Distance below which presence counts as a comfort violation."""
        return self.npa_radius if self.npa_allowed else self.fpa_radius


@dataclass(frozen=True)
class CostParams:
    fpa_cost: float = 1.0
    npa_cost: float = 5.0


def mf_gender(gender: str) -> float:
    """Binary gender membership: male maps to 0, female to 1."""
    if gender == "male":
        return 0.0
    if gender == "female":
        return 1.0
    raise UnsupportedAttributeError(f"no gender membership defined for {gender!r}")


def mf_distance(r: float, params: MembershipParams) -> float:
    """Sigmoid farness membership of a robot-person distance."""
    return 1.0 / (1.0 + math.exp(-params.distance_slope * (r - params.distance_center)))


def mf_relationship(x: float, params: MembershipParams) -> dict:
    """Unit-peak Gaussian membership of a crisp relationship score per class."""
    out = {}
    for term in RELATIONSHIP_TERMS:
        mu = params.relationship_centers[term]
        s = params.relationship_spreads[term]
        out[term] = math.exp(-((x - mu) ** 2) / (2.0 * s * s))
    return out


@dataclass(frozen=True)
class Rule:
    gender: str
    distance: str
    relationship: str
    npa_radius: float
    fpa_radius: float
    npa_allowed: bool


class FuzzyRuleTable:
    """Complete rule table over (gender, distance, relationship) terms."""

    def __init__(self, rules: list[Rule]):
        index = {}
        for r in rules:
            if r.gender not in GENDER_TERMS:
                raise ConfigError(f"rule gender term {r.gender!r} unknown")
            if r.distance not in DISTANCE_TERMS:
                raise ConfigError(f"rule distance term {r.distance!r} unknown")
            if r.relationship not in RELATIONSHIP_TERMS:
                raise ConfigError(f"rule relationship term {r.relationship!r} unknown")
            if not (0.0 < r.npa_radius <= r.fpa_radius):
                raise ConfigError(
                    f"rule radii must satisfy 0 < npa <= fpa, got {r.npa_radius}, {r.fpa_radius}"
                )
            key = (r.gender, r.distance, r.relationship)
            if key in index:
                raise ConfigError(f"duplicate rule for {key}")
            index[key] = r
        expected = len(GENDER_TERMS) * len(DISTANCE_TERMS) * len(RELATIONSHIP_TERMS)
        if len(index) != expected:
            missing = [
                (g, d, t)
                for g in GENDER_TERMS
                for d in DISTANCE_TERMS
                for t in RELATIONSHIP_TERMS
                if (g, d, t) not in index
            ]
            raise ConfigError(f"rule table incomplete, missing {missing}")
        self._index = index
        self.rules = list(rules)

    def lookup(self, gender: str, distance: str, relationship: str) -> Rule:
        return self._index[(gender, distance, relationship)]

    def with_closed_npa(self, gender: str) -> "FuzzyRuleTable":
        """Copy of the table where every rule for one gender closes the npa."""
        out = []
        for r in self.rules:
            if r.gender == gender:
                out.append(Rule(r.gender, r.distance, r.relationship, r.npa_radius, r.fpa_radius, False))
            else:
                out.append(r)
        return FuzzyRuleTable(out)


def infer_personal_area(
    person, table: FuzzyRuleTable, params: MembershipParams, relative_distance: float
) -> PersonalArea:
    """Defuzzify a person's attributes into crisp personal-area radii.

    Each input picks the term with the highest membership; ties fall to the
    first term in declaration order.
    """
    g = "female" if mf_gender(person.gender) == 1.0 else "male"
    d = "far" if mf_distance(relative_distance, params) > 0.5 else "near"
    rel = mf_relationship(person.relationship_score, params)
    best = RELATIONSHIP_TERMS[0]
    for term in RELATIONSHIP_TERMS[1:]:
        if rel[term] > rel[best]:
            best = term
    rule = table.lookup(g, d, best)
    return PersonalArea(rule.npa_radius, rule.fpa_radius, rule.npa_allowed)


def relative_distance(a: tuple, b: tuple) -> float:
    """Euclidean distance between two cells."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def comfort_violation(robot_cell: tuple, person_cell: tuple, area: PersonalArea) -> bool:
    """True when the robot sits inside the zone this person may not share."""
    return relative_distance(robot_cell, person_cell) < area.violation_radius()


def social_cost(robot_cell: tuple, person_cell: tuple, area: PersonalArea, costs: CostParams) -> float:
    """Discomfort cost of the robot's position relative to one person.

    Inside the npa (or anywhere inside the fpa when the npa is closed) the
    near-area cost applies; the remaining fpa ring carries the far-area cost.
    """
    d = relative_distance(robot_cell, person_cell)
    if d >= area.fpa_radius:
        return 0.0
    if not area.npa_allowed or d < area.npa_radius:
        return costs.npa_cost
    return costs.fpa_cost


def social_cost_map(width, height, placements, table, params, costs: CostParams) -> np.ndarray:
    """Summed per-cell discomfort over placed persons, shape (height, width).

    placements is a sequence of (person, cell) pairs.
    """
    total = np.zeros((height, width))
    xs = np.arange(width)[None, :]
    ys = np.arange(height)[:, None]
    for p, cell in placements:
        d = np.sqrt((xs - cell[0]) ** 2 + (ys - cell[1]) ** 2)
        near = infer_personal_area(p, table, params, 0.0)
        far = infer_personal_area(p, table, params, params.distance_center + 1.0)
        for area, mask in ((near, d <= params.distance_center), (far, d > params.distance_center)):
            inside_fpa = mask & (d < area.fpa_radius)
            if not area.npa_allowed:
                total[inside_fpa] += costs.npa_cost
            else:
                total[inside_fpa & (d < area.npa_radius)] += costs.npa_cost
                total[inside_fpa & (d >= area.npa_radius)] += costs.fpa_cost
    return total


def person_radii_arrays(persons, table, params):
    """Per-person squared radii in near/far term variants, for the step kernel.

    The far variant applies when squared distance exceeds distance_center
    squared, which is exactly where the farness sigmoid crosses 0.5.
    """
    n = len(persons)
    out = {
        "viol2_near": np.zeros(n),
        "viol2_far": np.zeros(n),
        "fpa2_near": np.zeros(n),
        "fpa2_far": np.zeros(n),
        "npa2_near": np.zeros(n),
        "npa2_far": np.zeros(n),
    }
    for i, p in enumerate(persons):
        near = infer_personal_area(p, table, params, 0.0)
        far = infer_personal_area(p, table, params, params.distance_center + 1.0)
        out["viol2_near"][i] = near.violation_radius() ** 2
        out["viol2_far"][i] = far.violation_radius() ** 2
        out["fpa2_near"][i] = near.fpa_radius**2
        out["fpa2_far"][i] = far.fpa_radius**2
        out["npa2_near"][i] = near.npa_radius**2
        out["npa2_far"][i] = far.npa_radius**2
    return out, params.distance_center**2
