"""Builders for the small scenario documents the test suite runs on.

Everything here returns plain dicts. Tests mutate them freely before handing
them to ScenarioConfig, so each helper deep-copies what it returns.
"""

import copy
from pathlib import Path

import pytest


def make_rules():
    """Full 12-row rule table with open near areas and modest radii."""
    rules = []
    for g in ("male", "female"):
        for d in ("near", "far"):
            for rel, npa, fpa in (
                ("familiar", 0.8, 2.0),
                ("acquaintance", 1.0, 2.5),
                ("stranger", 1.2, 2.8),
            ):
                rules.append(
                    {
                        "gender": g,
                        "distance": d,
                        "relationship": rel,
                        "npa_radius": npa,
                        "fpa_radius": fpa,
                        "npa_allowed": True,
                    }
                )
    return rules


MEMBERSHIP = {
    "distance_slope": 2.0,
    "distance_center": 1.5,
    "relationship_centers": {"familiar": 0.2, "acquaintance": 0.5, "stranger": 0.8},
    "relationship_spreads": {"familiar": 0.15, "acquaintance": 0.15, "stranger": 0.15},
}


def person_row(pid, **over):
    row = {
        "id": pid,
        "gender": "male",
        "age_group": "adult",
        "mobility": "unimpaired",
        "skin_tone": "type_3_4",
        "relationship_degree": "stranger",
        "speed_class": "slow",
        "activity": "standing",
    }
    row.update(over)
    return row


def coverage_roster():
    """Smallest roster that satisfies the two-categories-per-feature check."""
    return [
        person_row(
            "t01",
            gender="female",
            age_group="child",
            mobility="impaired",
            skin_tone="type_1_2",
            spawn_cell=[2, 1],
        ),
        person_row("t02", spawn_cell=[4, 1]),
        person_row(
            "t03",
            gender="female",
            age_group="elderly",
            skin_tone="type_5_6",
            spawn_cell=[1, 4],
        ),
        person_row("t04", skin_tone="type_1_2", spawn_cell=[4, 4]),
    ]


def tiny_doc(width=6, height=6, dock=(0, 0), goal=(5, 5), roster=(), **over):
    """Cleaning scenario on a small open grid; trains in a second or two."""
    doc = {
        "schema_version": 1,
        "scenario_id": "cleaning",
        "grid": {"width": width, "height": height, "obstacles": []},
        "dock": list(dock),
        "interaction_range": 2.0,
        "t_max": 60,
        "constraints": [],
        "reward": {"w_goal": 1.0, "w_step": 0.55, "w_collision": 5.0, "w_comfort": 1.0},
        "learning": {
            "alpha": 0.2,
            "gamma": 0.95,
            "episodes": 400,
            "epsilon": {"start": 1.0, "end": 0.05, "decay_frac": 0.8},
        },
        "audit": {
            "K": 2,
            "thresholds": {"gender": 0.2, "age_group": 0.2, "mobility": 0.2, "skin_tone": 0.2},
        },
        "membership": copy.deepcopy(MEMBERSHIP),
        "rule_table": make_rules(),
        "roster": [copy.deepcopy(r) for r in roster],
        "task": {"kind": "cleaning", "dirty_cells": [list(goal)]},
        "bias": {},
        "bias_seeds": [],
    }
    for key, val in over.items():
        doc[key] = copy.deepcopy(val)
    return doc


@pytest.fixture(scope="session")
def data_dir():
    import socnav

    return Path(socnav.__file__).parent / "data"
