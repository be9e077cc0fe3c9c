"""Experience log: line-delimited JSON records and audit feature matrices.

The first line of a log file is a schema header; every following line is one
step's experience, including a snapshot of the nearest person's protected
attributes. Feature matrices standardize six behavioral columns and never
include protected attributes; the latency sentinel (-1, inapplicable) is
mean-imputed before standardization so it never reaches the matrix raw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, SchemaError

LOG_SCHEMA_VERSION = 1

EXPERIENCE_FIELDS = (
    "episode",
    "timestep",
    "scenario_id",
    "state_key",
    "action",
    "reward",
    "nearest_person_id",
    "relative_distance",
    "comfort_violation",
    "collision",
    "robot_speed",
    "service_latency",
    "interaction_occurred",
    "protected",
)

PROTECTED_FEATURES = ("gender", "age_group", "mobility", "skin_tone")

FEATURE_COLUMNS = (
    "relative_distance",
    "robot_speed",
    "comfort_violation",
    "collision",
    "service_latency",
    "interaction_occurred",
)

LATENCY_SENTINEL = -1


def step_feature_vector(ev) -> tuple:
    """Raw feature tuple for a live step, latency still sentinel-coded."""
    return (
        math.sqrt(ev.nearest_d2) if ev.nearest_d2 >= 0 else 0.0,
        1.0 if ev.robot_moved else 0.0,
        1.0 if ev.comfort_violation else 0.0,
        1.0 if ev.collision else 0.0,
        float(ev.service_latency),
        1.0 if ev.interaction else 0.0,
    )


def validate_experience(e: dict, where: str = "record") -> None:
    if set(e) != set(EXPERIENCE_FIELDS):
        missing = sorted(set(EXPERIENCE_FIELDS) - set(e))
        extra = sorted(set(e) - set(EXPERIENCE_FIELDS))
        raise SchemaError(f"{where}: field mismatch (missing {missing}, unexpected {extra})")
    if set(e["protected"]) != set(PROTECTED_FEATURES):
        raise SchemaError(f"{where}: protected snapshot must hold exactly {PROTECTED_FEATURES}")
    if e["relative_distance"] < 0:
        raise SchemaError(f"{where}: relative_distance must be >= 0")
    if e["service_latency"] < LATENCY_SENTINEL:
        raise SchemaError(f"{where}: service_latency must be >= {LATENCY_SENTINEL}")


class ExperienceLog:
    """Append-only log writer; one JSON line per step, flushed per episode."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")
        self._fh.write(json.dumps({"schema_version": LOG_SCHEMA_VERSION}, sort_keys=True) + "\n")
        self._episode = None

    def record(self, e: dict) -> None:
        validate_experience(e, str(self.path))
        if self._episode is not None and e["episode"] != self._episode:
            self._fh.flush()
        self._episode = e["episode"]
        self._fh.write(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def write_log(path, experiences) -> None:
    with ExperienceLog(path) as log:
        for e in experiences:
            log.record(e)


def read_log(path) -> list[dict]:
    """Read and validate a log; malformed lines fail naming their line number."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise SchemaError(f"{path}: line {n}: invalid JSON ({e.msg})") from e
            if n == 1:
                if not isinstance(doc, dict) or "schema_version" not in doc:
                    raise SchemaError(f"{path}: line 1: missing schema_version header")
                if doc["schema_version"] != LOG_SCHEMA_VERSION:
                    raise SchemaError(
                        f"{path}: line 1: unsupported schema_version {doc['schema_version']!r}"
                    )
                continue
            try:
                validate_experience(doc, f"{path}: line {n}")
            except SchemaError:
                raise
            except (TypeError, KeyError) as e:
                raise SchemaError(f"{path}: line {n}: malformed record ({e})") from e
            out.append(doc)
    return out


@dataclass
class FeatureMatrix:
    """Standardized audit features with the statistics needed to reapply them."""

    X: np.ndarray
    columns: tuple
    means: np.ndarray
    stds: np.ndarray
    latency_mean: float

    def transform_raw(self, raw) -> np.ndarray:
        """Standardize one raw feature vector (latency may be sentinel)."""
        v = np.asarray(raw, dtype=np.float64).copy()
        lat = FEATURE_COLUMNS.index("service_latency")
        if v[lat] == LATENCY_SENTINEL:
            v[lat] = self.latency_mean
        out = np.zeros_like(v)
        nz = self.stds > 0
        out[nz] = (v[nz] - self.means[nz]) / self.stds[nz]
        return out


def featurize(experiences) -> FeatureMatrix:
    """Build the standardized feature matrix for a batch of experiences.

    Standard deviations are population deviations; constant columns map to
    zeros rather than dividing by zero.
    """
    if len(experiences) < 2:
        raise InsufficientDataError(
            f"need at least 2 experiences to standardize, got {len(experiences)}"
        )
    n = len(experiences)
    raw = np.zeros((n, len(FEATURE_COLUMNS)))
    for i, e in enumerate(experiences):
        raw[i, 0] = float(e["relative_distance"])
        raw[i, 1] = float(e["robot_speed"])
        raw[i, 2] = 1.0 if e["comfort_violation"] else 0.0
        raw[i, 3] = 1.0 if e["collision"] else 0.0
        raw[i, 4] = float(e["service_latency"])
        raw[i, 5] = 1.0 if e["interaction_occurred"] else 0.0
    lat = raw[:, 4]
    applicable = lat != LATENCY_SENTINEL
    latency_mean = float(lat[applicable].mean()) if applicable.any() else 0.0
    raw[~applicable, 4] = latency_mean
    means = raw.mean(axis=0)
    stds = raw.std(axis=0)  # population, ddof=0
    X = np.zeros_like(raw)
    nz = stds > 0
    X[:, nz] = (raw[:, nz] - means[nz]) / stds[nz]
    return FeatureMatrix(X=X, columns=FEATURE_COLUMNS, means=means, stds=stds, latency_mean=latency_mean)
