"""Bias audit: cluster logged experiences, score protected-attribute skew.

Clusters come from k-means over the standardized behavioral features. For
every (cluster, protected feature) pair the association score D is the total
variation distance between the in-cluster category distribution and the
log-wide one; a pair is flagged when D strictly exceeds the feature's
threshold and the cluster is not too small to trust.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigError, InsufficientDataError, SchemaError
from .experience import FEATURE_COLUMNS, LATENCY_SENTINEL, PROTECTED_FEATURES, featurize

AUDIT_SCHEMA_VERSION = 1
MIN_CLUSTER_SIZE = 5
KMEANS_MAX_ITER = 300
KMEANS_RESTARTS = 4

# which fairness considerations a flag carries, by the cluster's dominant column
_COMFORT_COLUMNS = {"relative_distance", "robot_speed", "comfort_violation", "collision"}
_SERVICE_COLUMNS = {"service_latency", "interaction_occurred"}

GROUP_METRIC_NAMES = (
    "comfort_violation_rate",
    "mean_relative_distance",
    "interaction_rate",
    "mean_service_latency",
)


@dataclass
class Clustering:
    centroids: np.ndarray
    labels: np.ndarray
    sizes: np.ndarray
    inertia: float
    radii2: np.ndarray  # squared distance to the farthest member, per cluster


def kmeans(X: np.ndarray, k: int, rng) -> Clustering:
    """Deterministic k-means: the best of several ++ seeded Lloyd runs.

    A single k-means++ draw occasionally merges a well-separated minority
    cluster into the bulk; restarting a few times and keeping the lowest
    inertia makes the returned structure stable across audit seeds. The rng
    is consumed sequentially, so the whole procedure stays reproducible.
    """
    if k < 2:
        raise ConfigError(f"K must be at least 2, got {k}")
    n = X.shape[0]
    if n < k:
        raise InsufficientDataError(f"need at least {k} experiences to form {k} clusters, got {n}")
    best = None
    for _ in range(KMEANS_RESTARTS):
        got = _kmeans_once(X, k, rng)
        if best is None or got.inertia < best.inertia - 1e-12:
            best = got
    return best


def _kmeans_once(X: np.ndarray, k: int, rng) -> Clustering:
    """One ++ seeded Lloyd descent to a fixpoint or 300 rounds.

    Empty clusters are repaired by re-seeding them at the farthest member of
    the largest cluster. Lloyd iterations must never increase inertia.
    """
    n = X.shape[0]
    centroids = _plusplus_seed(X, k, rng)
    labels, dmin = kernels.kmeans_assign(X, centroids)
    inertia = float(dmin.sum())
    for _ in range(KMEANS_MAX_ITER):
        sums, counts = kernels.kmeans_update(X, labels, k)
        repaired = False
        for c in range(k):
            if counts[c] == 0:
                big = int(np.argmax(counts))
                members = np.flatnonzero(labels == big)
                far = members[int(np.argmax(dmin[members]))]
                centroids[c] = X[far]
                repaired = True
            else:
                centroids[c] = sums[c] / counts[c]
        new_labels, dmin = kernels.kmeans_assign(X, centroids)
        new_inertia = float(dmin.sum())
        if not repaired and new_inertia > inertia + 1e-9:
            raise AssertionError(f"Lloyd iteration increased inertia: {inertia} -> {new_inertia}")
        if not repaired and np.array_equal(new_labels, labels):
            labels = new_labels
            inertia = new_inertia
            break
        labels = new_labels
        inertia = new_inertia
    sums, counts = kernels.kmeans_update(X, labels, k)
    radii2 = np.zeros(k)
    for c in range(k):
        members = np.flatnonzero(labels == c)
        if members.size:
            d2 = ((X[members] - centroids[c]) ** 2).sum(axis=1)
            radii2[c] = float(d2.max())
    return Clustering(centroids=centroids, labels=labels, sizes=counts, inertia=inertia, radii2=radii2)


def _plusplus_seed(X: np.ndarray, k: int, rng) -> np.ndarray:
    n = X.shape[0]
    centroids = np.zeros((k, X.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = X[first]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[c] = X[pick]
        d2 = np.minimum(d2, ((X - centroids[c]) ** 2).sum(axis=1))
    return centroids


@dataclass
class AssociationScore:
    cluster_id: int
    feature_name: str
    D: float
    u: float
    flagged: bool
    cluster_size: int
    small_cluster: bool


def association_scores(experiences, labels: np.ndarray, k: int, thresholds: dict) -> list[AssociationScore]:
    """Total variation distance between each cluster's category mix and the log's."""
    for f in PROTECTED_FEATURES:
        if f not in thresholds:
            raise ConfigError(f"no association threshold configured for {f!r}")
        if not (0.0 < thresholds[f] < 1.0):
            raise ConfigError(f"threshold for {f!r} must lie in (0, 1)")
    n = len(experiences)
    out = []
    for feat in PROTECTED_FEATURES:
        values = [e["protected"][feat] for e in experiences]
        cats = sorted(set(values))
        overall = {v: 0.0 for v in cats}
        for v in values:
            overall[v] += 1.0
        for v in cats:
            overall[v] /= n
        u = thresholds[feat]
        for c in range(k):
            members = np.flatnonzero(labels == c)
            size = int(members.size)
            if size:
                local = {v: 0.0 for v in cats}
                for i in members:
                    local[values[int(i)]] += 1.0
                d = 0.5 * sum(abs(local[v] / size - overall[v]) for v in cats)
            else:
                d = 0.0
            small = size < MIN_CLUSTER_SIZE
            out.append(
                AssociationScore(
                    cluster_id=c,
                    feature_name=feat,
                    D=d,
                    u=u,
                    flagged=(d > u) and not small,
                    cluster_size=size,
                    small_cluster=small,
                )
            )
    return out


def _dominant_column(centroid: np.ndarray) -> str:
    return FEATURE_COLUMNS[int(np.argmax(np.abs(centroid)))]


def fairness_labels(dominant: str, context: str) -> list[str]:
    """Fairness considerations a flag carries, by what drives the cluster."""
    if dominant in _COMFORT_COLUMNS:
        labels = ["non_maleficence", "bias_evaluation"]
    elif dominant in _SERVICE_COLUMNS:
        labels = ["shared_benefit", "value_alignment"]
    else:
        raise ConfigError(f"no fairness labeling for column {dominant!r}")
    if context == "relearning":
        labels = labels + ["deterrence"]
    return labels


def group_metrics(experiences) -> dict:
    """Per-category outcome means for every protected feature.

    mean_service_latency averages applicable (non-sentinel) values only and
    is null for a category that never saw a service event.
    """
    if not experiences:
        raise InsufficientDataError("cannot compute group metrics on an empty log")
    out = {}
    for feat in PROTECTED_FEATURES:
        cats = sorted(set(e["protected"][feat] for e in experiences))
        per = {}
        for cat in cats:
            rows = [e for e in experiences if e["protected"][feat] == cat]
            lat = [e["service_latency"] for e in rows if e["service_latency"] != LATENCY_SENTINEL]
            per[cat] = {
                "comfort_violation_rate": sum(1 for e in rows if e["comfort_violation"]) / len(rows),
                "mean_relative_distance": sum(e["relative_distance"] for e in rows) / len(rows),
                "interaction_rate": sum(1 for e in rows if e["interaction_occurred"]) / len(rows),
                "mean_service_latency": (sum(lat) / len(lat)) if lat else None,
                "count": len(rows),
            }
        out[feat] = per
    return out


def fairness_gaps(groups: dict, warnings: list | None = None) -> dict:
    """Max minus min of each metric across categories; 0 when underdetermined."""
    out = {}
    for feat, per in groups.items():
        gaps = {}
        for metric in GROUP_METRIC_NAMES:
            vals = [m[metric] for m in per.values() if m[metric] is not None]
            if len(vals) >= 2:
                gaps[metric] = max(vals) - min(vals)
            else:
                gaps[metric] = 0.0
                if warnings is not None:
                    warnings.append(
                        f"{feat}/{metric}: fewer than two categories with data, gap set to 0"
                    )
        out[feat] = gaps
    return out


@dataclass
class AugmentSpec:
    """Everything relearning needs to recognize flagged experience patterns."""

    columns: tuple
    means: np.ndarray
    stds: np.ndarray
    latency_mean: float
    centroids: np.ndarray  # flagged centroids, standardized space
    radii2: np.ndarray
    clusters: list = field(default_factory=list)  # flagged cluster ids, ascending
    features: list = field(default_factory=list)  # flagged feature names per cluster
    lam: float = 2.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("penalty weight must be nonnegative")
        if self.centroids.shape != (len(self.clusters), len(self.columns)):
            raise ConfigError("augment centroids do not match the feature schema")

    def with_lambda(self, lam: float) -> "AugmentSpec":
        return AugmentSpec(
            columns=self.columns,
            means=self.means,
            stds=self.stds,
            latency_mean=self.latency_mean,
            centroids=self.centroids,
            radii2=self.radii2,
            clusters=list(self.clusters),
            features=[list(f) for f in self.features],
            lam=lam,
        )

    def to_doc(self) -> dict:
        return {
            "schema_version": AUDIT_SCHEMA_VERSION,
            "columns": list(self.columns),
            "means": [float(v) for v in self.means],
            "stds": [float(v) for v in self.stds],
            "latency_mean": float(self.latency_mean),
            "clusters": [int(c) for c in self.clusters],
            "features": [list(f) for f in self.features],
            "centroids": [[float(v) for v in row] for row in self.centroids],
            "radii2": [float(v) for v in self.radii2],
            "lambda": float(self.lam),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "AugmentSpec":
        if doc.get("schema_version") != AUDIT_SCHEMA_VERSION:
            raise SchemaError("unsupported augment spec schema_version")
        n = len(doc["clusters"])
        m = len(doc["columns"])
        return cls(
            columns=tuple(doc["columns"]),
            means=np.array(doc["means"]),
            stds=np.array(doc["stds"]),
            latency_mean=float(doc["latency_mean"]),
            centroids=np.array(doc["centroids"], dtype=np.float64).reshape(n, m),
            radii2=np.array(doc["radii2"], dtype=np.float64),
            clusters=list(doc["clusters"]),
            features=[list(f) for f in doc["features"]],
            lam=float(doc["lambda"]),
        )


@dataclass
class AuditReport:
    K: int
    thresholds: dict
    scores: list
    groups: dict
    gaps: dict
    flags: list
    warnings: list

    def to_doc(self) -> dict:
        return {
            "schema_version": AUDIT_SCHEMA_VERSION,
            "K": self.K,
            "thresholds": dict(self.thresholds),
            "scores": [
                {
                    "cluster_id": s.cluster_id,
                    "feature_name": s.feature_name,
                    "D": s.D,
                    "u": s.u,
                    "flagged": s.flagged,
                    "cluster_size": s.cluster_size,
                    "small_cluster": s.small_cluster,
                }
                for s in self.scores
            ],
            "group_metrics": self.groups,
            "fairness_gaps": self.gaps,
            "flags": self.flags,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_doc(cls, doc: dict) -> "AuditReport":
        if doc.get("schema_version") != AUDIT_SCHEMA_VERSION:
            raise SchemaError("unsupported audit schema_version")
        scores = [
            AssociationScore(
                cluster_id=s["cluster_id"],
                feature_name=s["feature_name"],
                D=s["D"],
                u=s["u"],
                flagged=s["flagged"],
                cluster_size=s["cluster_size"],
                small_cluster=s["small_cluster"],
            )
            for s in doc["scores"]
        ]
        return cls(
            K=doc["K"],
            thresholds=doc["thresholds"],
            scores=scores,
            groups=doc["group_metrics"],
            gaps=doc["fairness_gaps"],
            flags=doc["flags"],
            warnings=doc["warnings"],
        )

    @classmethod
    def from_json(cls, text: str) -> "AuditReport":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise SchemaError(f"audit report is not valid JSON: {e}") from e
        return cls.from_doc(doc)


def audit(experiences, k: int, thresholds: dict, rng, context: str = "learning", lam: float = 2.0) -> tuple[AuditReport, AugmentSpec]:
    """Full audit pass: featurize, cluster, score, flag, summarize groups.

    Returns the report plus the augment spec derived from its flags.
    """
    fm = featurize(experiences)
    clustering = kmeans(fm.X, k, rng)
    scores = association_scores(experiences, clustering.labels, k, thresholds)
    warnings: list[str] = []
    flags = []
    flagged: dict[int, list] = {}
    for s in scores:
        if not s.flagged:
            continue
        dom = _dominant_column(clustering.centroids[s.cluster_id])
        flags.append(
            {
                "cluster_id": s.cluster_id,
                "feature_name": s.feature_name,
                "D": s.D,
                "u": s.u,
                "cluster_size": s.cluster_size,
                "dominant_column": dom,
                "labels": fairness_labels(dom, context),
            }
        )
        flagged.setdefault(s.cluster_id, []).append(s.feature_name)
    flagged_ids = sorted(flagged)
    groups = group_metrics(experiences)
    gaps = fairness_gaps(groups, warnings)
    for feat in PROTECTED_FEATURES:
        if len(groups[feat]) < 2:
            warnings.append(f"{feat}: single category in log, audit coverage limited")
    report = AuditReport(
        K=k, thresholds=thresholds, scores=scores, groups=groups, gaps=gaps, flags=flags, warnings=warnings
    )
    spec = AugmentSpec(
        columns=fm.columns,
        means=fm.means,
        stds=fm.stds,
        latency_mean=fm.latency_mean,
        centroids=clustering.centroids[flagged_ids] if flagged_ids else np.zeros((0, fm.X.shape[1])),
        radii2=clustering.radii2[flagged_ids] if flagged_ids else np.zeros(0),
        clusters=flagged_ids,
        features=[flagged[c] for c in flagged_ids],
        lam=lam,
    )
    return report, spec


def k_sweep(experiences, ks, thresholds: dict, rng) -> list[dict]:
    """Inertia and flag counts across candidate K values."""
    fm = featurize(experiences)
    out = []
    for k in ks:
        clustering = kmeans(fm.X, k, rng)
        scores = association_scores(experiences, clustering.labels, k, thresholds)
        out.append(
            {
                "K": k,
                "inertia": clustering.inertia,
                "n_flagged": sum(1 for s in scores if s.flagged),
            }
        )
    return out
