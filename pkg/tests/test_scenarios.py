import json

import pytest

from socnav.errors import ConfigError, UnsupportedAttributeError, UsageError
from socnav.scenarios import ScenarioConfig, inject_bias, load

from conftest import coverage_roster, person_row, tiny_doc


def guidance_doc():
    doc = tiny_doc(width=9, height=9, roster=coverage_roster())
    doc["scenario_id"] = "guidance"
    doc["task"] = {
        "kind": "guidance",
        "desk": [4, 4],
        "destinations": [[8, 8]],
        "requests_per_episode": 1,
        "request_window": 5,
    }
    doc["bias"] = {"priority_weights": {"male": 0.0, "female": 1.0}}
    return doc


def test_packaged_scenarios_load(data_dir):
    for name in ("cleaning", "guidance", "hospital"):
        scn = load(data_dir / f"{name}.scenario")
        assert scn.scenario_id == name
        assert scn.bias_seeds == ()
        assert scn.phase_count >= 1


def test_load_reports_file_problems(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load(tmp_path / "missing.scenario")
    bad = tmp_path / "bad.scenario"
    bad.write_text('{"schema_version": 1,\n "nope"')
    with pytest.raises(ConfigError, match="line 2"):
        load(bad)
    arr = tmp_path / "arr.scenario"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load(arr)


def test_document_shape_is_validated():
    with pytest.raises(ConfigError, match="missing required field 'dock'"):
        doc = tiny_doc()
        del doc["dock"]
        ScenarioConfig(doc, require_coverage=False)
    with pytest.raises(ConfigError, match="unknown scenario fields.*beds"):
        ScenarioConfig(tiny_doc(beds=[]), require_coverage=False)
    with pytest.raises(ConfigError, match="schema_version"):
        ScenarioConfig(tiny_doc(schema_version=3), require_coverage=False)
    with pytest.raises(ConfigError, match="scenario_id"):
        ScenarioConfig(tiny_doc(scenario_id="warehouse"), require_coverage=False)
    with pytest.raises(ConfigError, match="task kind"):
        doc = tiny_doc()
        doc["task"] = {"kind": "guidance", "desk": [1, 1], "destinations": [[2, 2]]}
        ScenarioConfig(doc, require_coverage=False)


def test_scalar_ranges_are_validated():
    with pytest.raises(ConfigError, match="t_max"):
        ScenarioConfig(tiny_doc(t_max=0), require_coverage=False)
    with pytest.raises(ConfigError, match="interaction_range"):
        ScenarioConfig(tiny_doc(interaction_range=0.0), require_coverage=False)
    with pytest.raises(ConfigError, match="alpha"):
        doc = tiny_doc()
        doc["learning"]["alpha"] = 0.0
        ScenarioConfig(doc, require_coverage=False)
    with pytest.raises(ConfigError, match="audit K"):
        doc = tiny_doc()
        doc["audit"]["K"] = 1
        ScenarioConfig(doc, require_coverage=False)
    with pytest.raises(ConfigError, match="thresholds missing"):
        doc = tiny_doc()
        del doc["audit"]["thresholds"]["mobility"]
        ScenarioConfig(doc, require_coverage=False)
    with pytest.raises(ConfigError, match="threshold for 'gender'"):
        doc = tiny_doc()
        doc["audit"]["thresholds"]["gender"] = 1.0
        ScenarioConfig(doc, require_coverage=False)


def test_dock_and_targets_must_be_free_and_reachable():
    doc = tiny_doc()
    doc["grid"]["obstacles"] = [[0, 0]]
    with pytest.raises(ConfigError, match="dock.*not a free cell"):
        ScenarioConfig(doc, require_coverage=False)
    doc = tiny_doc(goal=(5, 5))
    doc["grid"]["obstacles"] = [[4, 5], [5, 4], [4, 4]]
    with pytest.raises(ConfigError, match="no collision-free path"):
        ScenarioConfig(doc, require_coverage=False)
    doc = tiny_doc()
    doc["task"]["dirty_cells"] = [[9, 9]]
    with pytest.raises(ConfigError, match="\\[x, y\\]|not a free cell"):
        ScenarioConfig(doc, require_coverage=False)


def test_roster_attribute_domains():
    def one(row):
        return tiny_doc(roster=[row])

    with pytest.raises(UnsupportedAttributeError, match="no membership model"):
        ScenarioConfig(one(person_row("p", gender="nonbinary")), require_coverage=False)
    with pytest.raises(ConfigError, match="age_group"):
        ScenarioConfig(one(person_row("p", age_group="teen")), require_coverage=False)
    with pytest.raises(ConfigError, match="skin_tone"):
        ScenarioConfig(one(person_row("p", skin_tone="pale")), require_coverage=False)
    with pytest.raises(ConfigError, match="relationship_degree"):
        ScenarioConfig(one(person_row("p", relationship_degree="enemy")), require_coverage=False)
    with pytest.raises(ConfigError, match="speed_class"):
        ScenarioConfig(one(person_row("p", speed_class="sprinting")), require_coverage=False)
    with pytest.raises(ConfigError, match="activity"):
        ScenarioConfig(one(person_row("p", activity="dancing")), require_coverage=False)
    with pytest.raises(ConfigError, match="impaired mobility requires"):
        ScenarioConfig(
            one(person_row("p", mobility="impaired", speed_class="normal")), require_coverage=False
        )
    with pytest.raises(ConfigError, match="duplicate person id"):
        ScenarioConfig(tiny_doc(roster=[person_row("p"), person_row("p")]), require_coverage=False)
    with pytest.raises(ConfigError, match="outside \\[0, 1\\]"):
        ScenarioConfig(one(person_row("p", relationship_score=1.5)), require_coverage=False)
    with pytest.raises(ConfigError, match="spawn.*not a free"):
        doc = one(person_row("p", spawn_cell=[1, 1]))
        doc["grid"]["obstacles"] = [[1, 1]]
        ScenarioConfig(doc, require_coverage=False)


def test_relationship_score_defaults_to_term_center():
    doc = tiny_doc(
        roster=[
            person_row("a", relationship_degree="familiar"),
            person_row("b", relationship_degree="stranger", relationship_offset=0.1),
            person_row("c", relationship_score=0.42),
        ]
    )
    scn = ScenarioConfig(doc, require_coverage=False)
    assert scn.persons[0].relationship_score == pytest.approx(0.2)
    assert scn.persons[1].relationship_score == pytest.approx(0.9)
    assert scn.persons[2].relationship_score == pytest.approx(0.42)


def test_audit_coverage_requirement():
    doc = tiny_doc(roster=[person_row("p1"), person_row("p2")])
    with pytest.raises(ConfigError, match="audit coverage.*gender"):
        ScenarioConfig(doc)
    ScenarioConfig(doc, require_coverage=False)
    assert ScenarioConfig(tiny_doc(roster=coverage_roster())).persons[0].id == "t01"


def test_spawn_pool_must_fit_the_roster():
    doc = tiny_doc(width=4, height=4, dock=(0, 0), goal=(3, 3))
    keep = {(0, 0), (1, 0), (2, 0), (3, 0), (3, 1), (3, 2), (3, 3)}
    doc["grid"]["obstacles"] = [[x, y] for y in range(4) for x in range(4) if (x, y) not in keep]
    doc["pool_exclude"] = [[1, 0], [2, 0], [3, 0], [3, 1]]
    doc["roster"] = [person_row("a"), person_row("b")]
    with pytest.raises(ConfigError, match="spawn pool has 1 cells for 2"):
        ScenarioConfig(doc, require_coverage=False)


def test_pools_exclude_special_cells():
    doc = tiny_doc(goal=(5, 5), roster=[person_row("p")])
    doc["pool_exclude"] = [[2, 2]]
    scn = ScenarioConfig(doc, require_coverage=False)
    for banned in ((0, 0), (5, 5), (2, 2)):
        assert banned not in scn.spawn_pool
        assert banned not in scn.waypoint_pools[0]


def test_explicit_pools_are_validated():
    doc = tiny_doc()
    doc["spawn_pool"] = [[2, 2], [9, 9]]
    with pytest.raises(ConfigError, match="spawn cell"):
        ScenarioConfig(doc, require_coverage=False)
    doc = tiny_doc(roster=[person_row("p", activity="walking", waypoints=[[1, 1]])])
    scn = ScenarioConfig(doc, require_coverage=False)
    assert scn.waypoint_pools[0] == [(1, 1)]


def test_inject_bias_merges_and_is_idempotent():
    scn = ScenarioConfig(guidance_doc(), require_coverage=False)
    b1 = inject_bias(scn, ["gender_rule"])
    assert b1.bias_seeds == ("gender_rule",)
    b2 = inject_bias(b1, ["priority_weights"])
    assert b2.bias_seeds == ("gender_rule", "priority_weights")
    again = inject_bias(b2, ["gender_rule"])
    assert again == b2
    assert scn.bias_seeds == ()  # original untouched


def test_inject_bias_checks_applicability():
    cleaning = ScenarioConfig(tiny_doc(), require_coverage=False)
    with pytest.raises(UsageError, match="does not apply"):
        inject_bias(cleaning, ["priority_weights"])
    with pytest.raises(UsageError, match="unknown bias seed"):
        inject_bias(cleaning, ["weather_rule"])
    with pytest.raises(ConfigError, match="values are missing"):
        doc = guidance_doc()
        doc["bias"] = {}
        doc["bias_seeds"] = ["priority_weights"]
        ScenarioConfig(doc, require_coverage=False)


def test_gender_rule_bias_closes_npa_in_the_active_table():
    scn = ScenarioConfig(guidance_doc(), require_coverage=False)
    base = scn.rule_table
    assert all(r.npa_allowed for r in base.rules)
    biased = inject_bias(scn, ["gender_rule"])
    table = biased.rule_table
    for r in table.rules:
        assert r.npa_allowed == (r.gender != "female")
    # the biased table is derived, not stored: the base stays open
    assert all(r.npa_allowed for r in biased._base_table.rules)


def test_priority_weights_reach_the_task():
    scn = ScenarioConfig(guidance_doc(), require_coverage=False)
    assert scn.make_task().priority_weights is None
    biased = inject_bias(scn, ["priority_weights"])
    assert biased.make_task().priority_weights == {"male": 0.0, "female": 1.0}


def test_emergency_phase_mapping():
    cleaning = ScenarioConfig(tiny_doc(), require_coverage=False)
    assert not cleaning.emergency_from_phase(0)
    from test_policy import hospital_doc

    hosp = ScenarioConfig(hospital_doc(), require_coverage=False)
    half = hosp.phase_count // 2
    assert not hosp.emergency_from_phase(half - 1)
    assert hosp.emergency_from_phase(half)


def test_corridor_constraint_needs_cells():
    doc = tiny_doc()
    doc["constraints"] = ["no_emergency_corridor_entry"]
    with pytest.raises(ConfigError, match="no emergency_corridor cells"):
        ScenarioConfig(doc, require_coverage=False)


def test_to_doc_is_a_deep_copy():
    scn = ScenarioConfig(tiny_doc(), require_coverage=False)
    doc = scn.to_doc()
    doc["roster"].append(person_row("intruder"))
    doc["t_max"] = 1
    assert scn.to_doc()["t_max"] == 60
    assert len(scn.to_doc()["roster"]) == 0
    assert ScenarioConfig(scn.to_doc(), require_coverage=False) == scn


def test_membership_tables_must_cover_all_terms():
    doc = tiny_doc()
    doc["membership"]["relationship_centers"] = {"familiar": 0.2}
    with pytest.raises(ConfigError, match="must cover exactly"):
        ScenarioConfig(doc, require_coverage=False)
