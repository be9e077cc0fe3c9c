"""Relearning: continue training with penalties on flagged experience patterns.

A step's reward is reduced by the audit spec's penalty weight whenever the
step lands inside one of the flagged clusters, i.e. within that cluster's
audit-time radius of its centroid in standardized feature space. Everything
else about training is unchanged, so a run with no flags (or penalty 0) is
ordinary continued training from the same table.
"""

from __future__ import annotations

import math

import numpy as np

from . import kernels
from .audit import AugmentSpec, fairness_gaps, group_metrics
from .errors import ConfigError
from .experience import FEATURE_COLUMNS
from .policy import EpsilonSchedule, QPolicy, simulate, train

# warm starts explore gently: the penalty mostly demotes actions whose
# runners-up are already shaped, so a light wander finds the detours without
# washing out the long-horizon structure being corrected
RELEARN_EPSILON = EpsilonSchedule(start=0.1, end=0.02, decay_frac=0.8)


class RewardAugment:
    """Applies r - lambda when a step matches a flagged cluster."""

    def __init__(self, spec: AugmentSpec):
        if tuple(spec.columns) != FEATURE_COLUMNS:
            raise ConfigError("augment spec columns do not match the feature schema")
        self.spec = spec
        # guard stds of constant columns once, not per step
        self._stds = np.where(spec.stds > 0, spec.stds, 1.0)
        self._zero = spec.stds <= 0
        self._lat_col = spec.columns.index("service_latency")
        self._centroids = np.ascontiguousarray(spec.centroids)
        self._radii2 = np.ascontiguousarray(spec.radii2)

    def standardize(self, raw) -> np.ndarray:
        v = np.array(raw, dtype=np.float64)
        if v[self._lat_col] == -1:
            v[self._lat_col] = self.spec.latency_mean
        z = (v - self.spec.means) / self._stds
        z[self._zero] = 0.0
        return z

    def assign_raw(self, raw) -> int:
        """Flagged-list index for a raw feature vector, or -1 for none."""
        if self._centroids.shape[0] == 0:
            return -1
        z = self.standardize(raw)
        return int(kernels.nearest_flagged(z, self._centroids, self._radii2))

    def augmented_reward(self, reward: float, ev) -> float:
        if ev.nearest_idx < 0:
            return reward
        raw = (
            math.sqrt(ev.nearest_d2),
            1.0 if ev.robot_moved else 0.0,
            1.0 if ev.comfort_violation else 0.0,
            1.0 if ev.collision else 0.0,
            float(ev.service_latency),
            1.0 if ev.interaction else 0.0,
        )
        if self.assign_raw(raw) >= 0:
            return reward - self.spec.lam
        return reward


def _raw_from_experience(e: dict) -> tuple:
    return (
        float(e["relative_distance"]),
        float(e["robot_speed"]),
        1.0 if e["comfort_violation"] else 0.0,
        1.0 if e["collision"] else 0.0,
        float(e["service_latency"]),
        1.0 if e["interaction_occurred"] else 0.0,
    )


def assign_cluster(e: dict, spec: AugmentSpec):
    """Flagged cluster id for a logged experience, or None.

    Assignment is radius-gated: the nearest flagged centroid wins only if
    the experience sits within that cluster's audit-time radius. Ties take
    the lowest cluster id.
    """
    idx = RewardAugment(spec).assign_raw(_raw_from_experience(e))
    return spec.clusters[idx] if idx >= 0 else None


def augment_reward(r: float, e: dict, spec: AugmentSpec) -> float:
    """r - lambda when the experience maps to a flagged cluster, else r."""
    if assign_cluster(e, spec) is not None:
        return r - spec.lam
    return r


def relearn(base_policy: QPolicy, scenario, episodes: int, seed: int, spec: AugmentSpec):
    """Warm-start from base_policy and train against the audit's flags.

    Returns (policy, metrics, warnings). With nothing flagged this reduces
    to plain continued training and says so; episodes=0 returns the base
    table unchanged.
    """
    warnings: list[str] = []
    if episodes == 0:
        return base_policy.copy(), {"return": [], "violations": [], "collisions": [], "success": []}, warnings
    if spec.centroids.shape[0] == 0:
        warnings.append("audit flagged no clusters; relearning is plain continued training")
        augment = None
    else:
        augment = RewardAugment(spec)
    policy, metrics = train(
        scenario, episodes, seed, base_policy=base_policy, augment=augment, epsilon=RELEARN_EPSILON
    )
    return policy, metrics, warnings


def evaluate(policy_a: QPolicy, policy_b: QPolicy, scenario, eval_episodes: int, seed: int) -> dict:
    """Greedy evaluation of both policies on identical seeds.

    The delta tables are b minus a, so when b closes a gap the delta is
    negative.
    """
    out = {}
    for name, policy in (("a", policy_a), ("b", policy_b)):
        log, metrics = simulate(scenario, policy, eval_episodes, seed)
        groups = group_metrics(log)
        gaps = fairness_gaps(groups)
        out[name] = {
            "success_rate": sum(metrics["success"]) / eval_episodes,
            "mean_return": sum(metrics["return"]) / eval_episodes,
            "mean_violations": sum(metrics["violations"]) / eval_episodes,
            "mean_collisions": sum(metrics["collisions"]) / eval_episodes,
            "group_metrics": groups,
            "fairness_gaps": gaps,
        }
    deltas = {}
    for feat, gaps in out["b"]["fairness_gaps"].items():
        deltas[feat] = {
            metric: gaps[metric] - out["a"]["fairness_gaps"][feat][metric] for metric in gaps
        }
    out["gap_deltas"] = deltas
    out["success_delta"] = out["b"]["success_rate"] - out["a"]["success_rate"]
    return out
