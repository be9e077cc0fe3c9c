import json

import numpy as np
import pytest

import oracles
from socnav.errors import InsufficientDataError, SchemaError
from socnav.experience import (
    FEATURE_COLUMNS,
    LATENCY_SENTINEL,
    ExperienceLog,
    featurize,
    read_log,
    step_feature_vector,
    validate_experience,
    write_log,
)
from socnav.world import StepEvents


def make_exp(i, **over):
    e = {
        "episode": i // 10,
        "timestep": i % 10,
        "scenario_id": "cleaning",
        "state_key": 100 + i,
        "action": "right",
        "reward": -0.55,
        "nearest_person_id": "p01",
        "relative_distance": 2.0 + 0.1 * i,
        "comfort_violation": i % 7 == 0,
        "collision": False,
        "robot_speed": i % 2,
        "service_latency": LATENCY_SENTINEL,
        "interaction_occurred": i % 5 == 0,
        "protected": {
            "gender": "female" if i % 2 else "male",
            "age_group": "adult",
            "mobility": "unimpaired",
            "skin_tone": "type_3_4",
        },
    }
    e.update(over)
    return e


def sample_batch(n=40):
    out = []
    for i in range(n):
        over = {"service_latency": float(3 + i % 6)} if i % 9 == 0 else {}
        out.append(make_exp(i, **over))
    return out


def test_log_round_trip(tmp_path):
    path = tmp_path / "run.log"
    batch = sample_batch()
    write_log(path, batch)
    assert read_log(path) == batch


def test_log_skips_blank_lines(tmp_path):
    path = tmp_path / "run.log"
    write_log(path, sample_batch(3))
    text = path.read_text().replace("\n", "\n\n", 1)
    path.write_text(text)
    assert len(read_log(path)) == 3


def test_log_rejects_missing_header(tmp_path):
    path = tmp_path / "bad.log"
    path.write_text(json.dumps(make_exp(0)) + "\n")
    with pytest.raises(SchemaError, match="line 1"):
        read_log(path)


def test_log_rejects_wrong_schema_version(tmp_path):
    path = tmp_path / "bad.log"
    path.write_text('{"schema_version": 99}\n')
    with pytest.raises(SchemaError, match="schema_version"):
        read_log(path)


def test_log_names_the_offending_line(tmp_path):
    path = tmp_path / "bad.log"
    write_log(path, sample_batch(4))
    lines = path.read_text().splitlines()
    lines[3] = "{truncated"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="line 4"):
        read_log(path)
    bad = make_exp(0)
    del bad["reward"]
    lines[3] = json.dumps(bad)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError, match="line 4.*missing.*reward"):
        read_log(path)


def test_validate_experience_checks_ranges():
    with pytest.raises(SchemaError, match="relative_distance"):
        validate_experience(make_exp(0, relative_distance=-0.5))
    with pytest.raises(SchemaError, match="service_latency"):
        validate_experience(make_exp(0, service_latency=-2))
    bad = make_exp(0)
    bad["protected"] = {"gender": "male"}
    with pytest.raises(SchemaError, match="protected"):
        validate_experience(bad)
    bad = make_exp(0)
    bad["extra_field"] = 1
    with pytest.raises(SchemaError, match="unexpected.*extra_field"):
        validate_experience(bad)


def test_writer_validates_on_record(tmp_path):
    with ExperienceLog(tmp_path / "run.log") as log:
        log.record(make_exp(0))
        with pytest.raises(SchemaError):
            log.record(make_exp(1, relative_distance=-1.0))


def test_featurize_matches_plain_standardization():
    rng = np.random.default_rng(3)
    batch = []
    for i in range(60):
        batch.append(
            make_exp(
                i,
                relative_distance=float(rng.uniform(0.5, 6.0)),
                robot_speed=int(rng.integers(2)),
                comfort_violation=bool(rng.random() < 0.3),
                collision=bool(rng.random() < 0.1),
                service_latency=float(rng.integers(0, 9)),
                interaction_occurred=bool(rng.random() < 0.4),
            )
        )
    fm = featurize(batch)
    rows = [[float(e[c]) for c in FEATURE_COLUMNS] for e in batch]
    expected = np.array(oracles.zscore_columns(rows))
    assert np.allclose(fm.X, expected, atol=1e-12)


def test_featurize_column_invariants():
    fm = featurize(sample_batch(80))
    assert np.all(np.abs(fm.X.mean(axis=0)) < 1e-9)
    for sd in fm.X.std(axis=0):
        assert sd == 0.0 or abs(sd - 1.0) < 1e-9


def test_latency_sentinel_imputed_to_applicable_mean():
    batch = sample_batch(30)
    real = [e["service_latency"] for e in batch if e["service_latency"] != LATENCY_SENTINEL]
    fm = featurize(batch)
    assert fm.latency_mean == pytest.approx(np.mean(real))
    # imputed rows sit exactly at the column mean, i.e. z = 0
    lat = FEATURE_COLUMNS.index("service_latency")
    for i, e in enumerate(batch):
        if e["service_latency"] == LATENCY_SENTINEL:
            assert fm.X[i, lat] == 0.0


def test_all_sentinel_latency_gives_constant_zero_column():
    batch = [make_exp(i) for i in range(20)]
    fm = featurize(batch)
    lat = FEATURE_COLUMNS.index("service_latency")
    assert fm.latency_mean == 0.0
    assert np.all(fm.X[:, lat] == 0.0)
    assert fm.stds[lat] == 0.0


def test_transform_raw_reproduces_matrix_rows():
    batch = sample_batch(50)
    fm = featurize(batch)
    for i, e in enumerate(batch):
        raw = [float(e[c]) for c in FEATURE_COLUMNS]
        assert np.allclose(fm.transform_raw(raw), fm.X[i], atol=1e-12)


def test_featurize_is_permutation_equivariant():
    batch = sample_batch(40)
    fm = featurize(batch)
    perm = np.random.default_rng(0).permutation(len(batch))
    fm2 = featurize([batch[i] for i in perm])
    assert np.allclose(fm2.X, fm.X[perm], atol=1e-12)


def test_features_ignore_protected_attributes():
    batch = sample_batch(40)
    flipped = []
    for e in batch:
        f = dict(e)
        f["protected"] = {
            "gender": "female" if e["protected"]["gender"] == "male" else "male",
            "age_group": "child",
            "mobility": "impaired",
            "skin_tone": "type_1_2",
        }
        flipped.append(f)
    assert np.array_equal(featurize(batch).X, featurize(flipped).X)


def test_featurize_needs_two_rows():
    with pytest.raises(InsufficientDataError):
        featurize([make_exp(0)])


def test_step_feature_vector_reads_events():
    ev = StepEvents(nearest_d2=4, robot_moved=True, comfort_violation=True)
    assert step_feature_vector(ev) == (2.0, 1.0, 1.0, 0.0, float(LATENCY_SENTINEL), 0.0)
    assert step_feature_vector(StepEvents())[0] == 0.0
