"""Command line entry point: train, simulate, audit, relearn, report, pipeline.

Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration
error. Outputs are write-once and every command leaves a manifest beside its
primary output, so any artifact can be traced back to its exact inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import rng as rng_mod
from . import scenarios
from .audit import AugmentSpec, audit, k_sweep
from .errors import ConfigError, SchemaError, SocnavError, UsageError
from .experience import read_log, write_log
from .manifest import check_write_once, manifest_path, read_manifest, sha256_file, write_manifest
from .policy import QPolicy, simulate, train
from .relearn import evaluate, relearn

log = logging.getLogger("socnav")

METRICS_COLUMNS = ("episode", "return", "violations", "collisions", "success")
REPORT_COLUMNS = ("run_id", "command", "scenario", "seed") + METRICS_COLUMNS

_LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging() -> None:
    name = os.environ.get("SOCNAV_LOG_LEVEL", "warn").lower()
    if name not in _LOG_LEVELS:
        raise UsageError(f"SOCNAV_LOG_LEVEL must be one of {sorted(_LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=_LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s")


def _parse_bias(text):
    return [s for s in (text or "").split(",") if s]


def _parse_thresholds(text, default=0.2) -> dict:
    feats = ("gender", "age_group", "mobility", "skin_tone")
    if not text:
        return {f: default for f in feats}
    if "=" not in text:
        return {f: float(text) for f in feats}
    out = {f: default for f in feats}
    for part in text.split(","):
        name, _, val = part.partition("=")
        if name not in feats:
            raise UsageError(f"unknown threshold feature {name!r}")
        out[name] = float(val)
    return out


def _load_scenario(args) -> scenarios.ScenarioConfig:
    sc = scenarios.load(args.scenario)
    seeds = _parse_bias(getattr(args, "bias", None))
    if seeds:
        sc = scenarios.inject_bias(sc, seeds)
    return sc


def _load_policy(path) -> QPolicy:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return QPolicy.from_json(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"policy file {path} does not exist")


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
        if not text.endswith("\n"):
            fh.write("\n")


def _write_metrics_csv(path, metrics: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for ep in range(len(metrics["return"])):
            w.writerow(
                [
                    ep,
                    repr(metrics["return"][ep]),
                    metrics["violations"][ep],
                    metrics["collisions"][ep],
                    int(metrics["success"][ep]),
                ]
            )


def _params(args, names) -> dict:
    return {n: getattr(args, n) for n in names}


# ---------- commands ----------


def cmd_train(args) -> int:
    sc = _load_scenario(args)
    episodes = args.episodes if args.episodes is not None else sc.episodes
    metrics_path = args.out + ".metrics.csv"
    check_write_once([args.out, metrics_path, manifest_path(args.out)])
    policy, metrics = train(sc, episodes, args.seed)
    _write_text(args.out, policy.to_json())
    _write_metrics_csv(metrics_path, metrics)
    write_manifest(
        "train",
        args.scenario,
        args.seed,
        {**_params(args, ("scenario", "seed", "out")), "episodes": episodes, "bias": _parse_bias(args.bias)},
        {"policy": args.out, "metrics": metrics_path},
    )
    n = len(metrics["success"])
    rate = sum(metrics["success"]) / n if n else 0.0
    log.info("trained %d episodes, final success rate %.3f", n, rate)
    return 0


def cmd_simulate(args) -> int:
    sc = _load_scenario(args)
    policy = _load_policy(args.policy)
    if policy.gamma != sc.gamma:
        raise ConfigError(
            f"policy gamma {policy.gamma} does not match scenario gamma {sc.gamma}"
        )
    check_write_once([args.log, manifest_path(args.log)])
    experiences, metrics = simulate(sc, policy, args.episodes, args.seed)
    write_log(args.log, experiences)
    write_manifest(
        "simulate",
        args.scenario,
        args.seed,
        {
            **_params(args, ("scenario", "policy", "episodes", "seed", "log")),
            "bias": _parse_bias(args.bias),
            "policy_sha256": sha256_file(args.policy),
        },
        {"log": args.log},
    )
    log.info("recorded %d experiences over %d episodes", len(experiences), args.episodes)
    return 0


def cmd_audit(args) -> int:
    experiences = read_log(args.log)
    thresholds = _parse_thresholds(args.thresholds)
    companion = args.out + ".augment.json"
    sweep_path = args.out + ".ksweep.json" if args.k_sweep else None
    check_write_once([args.out, companion, sweep_path, manifest_path(args.out)])
    gen = rng_mod.stream(args.seed, "kmeans")
    report, spec = audit(experiences, args.k, thresholds, gen, context=args.context, lam=args.lam)
    _write_text(args.out, report.to_json())
    doc = spec.to_doc()
    doc["audit_report"] = {"path": args.out, "sha256": sha256_file(args.out)}
    _write_text(companion, json.dumps(doc, sort_keys=True, separators=(",", ":")))
    outputs = {"report": args.out, "augment": companion}
    if args.k_sweep:
        gen2 = rng_mod.stream(args.seed, "kmeans")
        sweep = k_sweep(experiences, range(2, 11), thresholds, gen2)
        _write_text(sweep_path, json.dumps(sweep, sort_keys=True, separators=(",", ":")))
        outputs["ksweep"] = sweep_path
    write_manifest(
        "audit",
        None,
        args.seed,
        {**_params(args, ("log", "k", "seed", "out", "context")), "thresholds": thresholds, "lambda": args.lam},
        outputs,
    )
    for w in report.warnings:
        log.warning("%s", w)
    log.info("%d flags across %d clusters", len(report.flags), args.k)
    return 0


def _load_augment(audit_path, lam) -> AugmentSpec:
    companion = audit_path + ".augment.json"
    try:
        with open(companion, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"audit companion {companion} does not exist")
    except json.JSONDecodeError as e:
        raise SchemaError(f"{companion}: not valid JSON ({e.msg})") from e
    ref = doc.get("audit_report", {})
    if ref.get("sha256") != sha256_file(audit_path):
        raise ConfigError(f"{companion} does not belong to audit report {audit_path}")
    spec = AugmentSpec.from_doc(doc)
    if lam is not None:
        spec = spec.with_lambda(lam)
    return spec


def cmd_relearn(args) -> int:
    sc = _load_scenario(args)
    base = _load_policy(args.policy)
    if base.gamma != sc.gamma:
        raise ConfigError(f"policy gamma {base.gamma} does not match scenario gamma {sc.gamma}")
    spec = _load_augment(args.audit, args.lam)
    compare_path = args.out + ".compare.json"
    metrics_path = args.out + ".metrics.csv"
    check_write_once([args.out, compare_path, metrics_path, manifest_path(args.out)])
    episodes = args.episodes if args.episodes is not None else sc.episodes
    policy = base
    metrics = None
    for r in range(args.rounds):
        policy, metrics, warnings = relearn(policy, sc, episodes, args.seed + r, spec)
        for w in warnings:
            log.warning("%s", w)
        if r + 1 < args.rounds:
            # audit the retrained policy's own behavior before the next round
            experiences, _ = simulate(sc, policy, args.sim_episodes, args.seed + r)
            gen = rng_mod.stream(args.seed + r, "kmeans")
            _, spec = audit(
                experiences, args.k, _parse_thresholds(args.thresholds), gen,
                context="relearning", lam=spec.lam,
            )
    comparison = evaluate(base, policy, sc, args.eval_episodes, args.seed)
    _write_text(args.out, policy.to_json())
    _write_text(compare_path, json.dumps(comparison, sort_keys=True, separators=(",", ":")))
    _write_metrics_csv(metrics_path, metrics)
    write_manifest(
        "relearn",
        args.scenario,
        args.seed,
        {
            **_params(args, ("scenario", "policy", "audit", "seed", "out", "rounds")),
            "episodes": episodes,
            "lambda": spec.lam,
            "bias": _parse_bias(args.bias),
            "policy_sha256": sha256_file(args.policy),
            "audit_sha256": sha256_file(args.audit),
        },
        {"policy": args.out, "comparison": compare_path, "metrics": metrics_path},
    )
    delta = comparison["gap_deltas"].get("gender", {})
    log.info("gender gap deltas: %s", {k: round(v, 4) for k, v in delta.items()})
    return 0


def cmd_report(args) -> int:
    manifests = []
    for root, _, files in os.walk(args.runs):
        for name in files:
            if name.endswith(".manifest.json"):
                manifests.append(os.path.join(root, name))
    rows = []
    for mpath in sorted(manifests):
        doc = read_manifest(mpath)
        metrics_ref = doc["outputs"].get("metrics")
        if metrics_ref is None:
            continue
        scenario_ref = doc.get("scenario")
        scenario = (
            os.path.splitext(os.path.basename(scenario_ref["path"]))[0] if scenario_ref else ""
        )
        with open(metrics_ref["path"], "r", encoding="utf-8", newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(
                    [doc["run_id"], doc["command"], scenario, doc["seed"]]
                    + [rec[c] for c in METRICS_COLUMNS]
                )
    rows.sort(key=lambda r: (r[0], int(r[4])))
    check_write_once([args.out])
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_COLUMNS)
        w.writerows(rows)
    if not rows:
        log.warning("no run metrics found under %s", args.runs)
    return 0


def _pipeline_one(args, seed: int) -> dict:
    base = os.path.join(args.out_dir, f"seed-{seed}")
    os.makedirs(base, exist_ok=True)
    ns = argparse.Namespace(**vars(args))
    ns.seed = seed
    ns.out = os.path.join(base, "policy.json")
    cmd_train(ns)
    ns.policy = ns.out
    ns.log = os.path.join(base, "experience.jsonl")
    ns.episodes = args.sim_episodes
    cmd_simulate(ns)
    ns.out = os.path.join(base, "audit.json")
    cmd_audit(argparse.Namespace(**{**vars(ns), "log": ns.log, "context": "learning", "k_sweep": False}))
    ns.audit = ns.out
    ns.out = os.path.join(base, "relearned.json")
    ns.episodes = args.relearn_episodes
    cmd_relearn(ns)
    with open(ns.out + ".compare.json", "r", encoding="utf-8") as fh:
        comparison = json.load(fh)
    return {"seed": seed, "gap_deltas": comparison["gap_deltas"], "success_delta": comparison["success_delta"]}


def cmd_pipeline(args) -> int:
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    os.makedirs(args.out_dir, exist_ok=True)
    if args.jobs > 1 and len(seeds) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(lambda s: _pipeline_one(args, s), seeds))
    else:
        results = [_pipeline_one(args, s) for s in seeds]
    report_path = os.path.join(args.out_dir, "report.csv")
    ns = argparse.Namespace(runs=args.out_dir, out=report_path)
    cmd_report(ns)
    summary = os.path.join(args.out_dir, "summary.json")
    check_write_once([summary])
    _write_text(summary, json.dumps(results, sort_keys=True, separators=(",", ":")))
    return 0


# ---------- parser ----------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="socnav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy on a scenario")
    t.add_argument("--scenario", required=True)
    t.add_argument("--episodes", type=int, default=None, help="default: the scenario's budget")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--out", required=True, help="policy output path")
    t.add_argument("--bias", default="", help="comma-separated bias seeds to inject")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="greedy rollouts, recording an experience log")
    s.add_argument("--policy", required=True)
    s.add_argument("--scenario", required=True)
    s.add_argument("--episodes", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--log", required=True, help="experience log output path")
    s.add_argument("--bias", default="")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("audit", help="cluster a log and score protected-feature associations")
    a.add_argument("--log", required=True)
    a.add_argument("--k", type=int, default=6)
    a.add_argument("--thresholds", default="", help="single value or feature=value list")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True, help="audit report output path")
    a.add_argument("--lambda", dest="lam", type=float, default=2.0, help="penalty stored for relearning")
    a.add_argument("--context", choices=("learning", "relearning"), default="learning")
    a.add_argument("--k-sweep", action="store_true", help="also write a K=2..10 sweep")
    a.set_defaults(func=cmd_audit)

    r = sub.add_parser("relearn", help="continue training against an audit's flags")
    r.add_argument("--policy", required=True)
    r.add_argument("--audit", required=True, help="audit report path (companion file sits beside it)")
    r.add_argument("--scenario", required=True)
    r.add_argument("--episodes", type=int, default=None)
    r.add_argument("--lambda", dest="lam", type=float, default=None, help="override the stored penalty")
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--out", required=True, help="relearned policy output path")
    r.add_argument("--rounds", type=int, default=1)
    r.add_argument("--bias", default="")
    r.add_argument("--k", type=int, default=6)
    r.add_argument("--thresholds", default="")
    r.add_argument("--sim-episodes", type=int, default=100, help="log size for between-round audits")
    r.add_argument("--eval-episodes", type=int, default=100)
    r.set_defaults(func=cmd_relearn)

    rep = sub.add_parser("report", help="consolidate run metrics into one CSV")
    rep.add_argument("--runs", required=True, help="directory searched for manifests")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="train, simulate, audit, relearn, evaluate in one go")
    pl.add_argument("--scenario", required=True)
    pl.add_argument("--seed", type=int, default=0)
    pl.add_argument("--seeds", default="", help="comma-separated seed list; overrides --seed")
    pl.add_argument("--jobs", type=int, default=1)
    pl.add_argument("--episodes", type=int, default=None)
    pl.add_argument("--relearn-episodes", type=int, default=None)
    pl.add_argument("--sim-episodes", type=int, default=100)
    pl.add_argument("--eval-episodes", type=int, default=100)
    pl.add_argument("--k", type=int, default=6)
    pl.add_argument("--thresholds", default="")
    pl.add_argument("--lambda", dest="lam", type=float, default=2.0)
    pl.add_argument("--bias", default="")
    pl.add_argument("--rounds", type=int, default=1)
    pl.add_argument("--out-dir", required=True)
    pl.set_defaults(func=cmd_pipeline)

    return p


def main(argv=None) -> int:
    try:
        _setup_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except SchemaError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 1
    except SocnavError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
