"""Fairness-aware social robot navigation at desk scale.

A gridworld robot learns constrained tabular policies among simulated
persons, logs its navigation experiences, audits them for associations
between behavior clusters and protected attributes, and relearns with a
penalty on flagged behavior patterns.
"""

__version__ = "0.1.0"

from .audit import AuditReport, AugmentSpec, audit, fairness_gaps, group_metrics, kmeans
from .errors import (
    ConfigError,
    InsufficientDataError,
    SchemaError,
    SocnavError,
    UnsupportedAttributeError,
    UsageError,
)
from .experience import featurize, read_log, write_log
from .policy import EpsilonSchedule, QPolicy, RewardSpec, simulate, train
from .relearn import assign_cluster, augment_reward, evaluate, relearn
from .scenarios import ScenarioConfig, inject_bias, load
from .social import (
    FuzzyRuleTable,
    MembershipParams,
    PersonalArea,
    infer_personal_area,
    mf_distance,
    mf_gender,
    mf_relationship,
)
from .world import GridMap, Person, World

__all__ = [
    "AuditReport",
    "AugmentSpec",
    "ConfigError",
    "EpsilonSchedule",
    "FuzzyRuleTable",
    "GridMap",
    "InsufficientDataError",
    "MembershipParams",
    "Person",
    "PersonalArea",
    "QPolicy",
    "RewardSpec",
    "ScenarioConfig",
    "SchemaError",
    "SocnavError",
    "UnsupportedAttributeError",
    "UsageError",
    "World",
    "assign_cluster",
    "audit",
    "augment_reward",
    "evaluate",
    "fairness_gaps",
    "featurize",
    "group_metrics",
    "infer_personal_area",
    "inject_bias",
    "kmeans",
    "load",
    "mf_distance",
    "mf_gender",
    "mf_relationship",
    "read_log",
    "relearn",
    "simulate",
    "train",
    "write_log",
]
