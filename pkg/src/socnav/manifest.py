"""Run manifests: every command's outputs, inputs, and parameters on disk.

A manifest makes a run replayable: it records the command, the scenario file
with its checksum, the seed, the parameter snapshot, and a checksum for every
output file. Outputs are write-once; a path that already exists is a
configuration error, never an overwrite.
"""

from __future__ import annotations

import hashlib
import json
import os

from .errors import ConfigError, SchemaError

MANIFEST_SCHEMA_VERSION = 1


def tool_version() -> str:
    from . import __version__

    return __version__


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_id(command: str, params: dict) -> str:
    """Stable short id derived from the command and its full parameter snapshot."""
    blob = json.dumps({"command": command, "params": params}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def check_write_once(paths) -> None:
    for p in paths:
        if p is not None and os.path.exists(p):
            raise ConfigError(f"output {p} already exists; outputs are write-once")


def manifest_path(primary_output) -> str:
    return str(primary_output) + ".manifest.json"


def write_manifest(command: str, scenario_path, seed, params: dict, outputs: dict) -> str:
    """Write the manifest next to the primary output; returns the run id.

    outputs maps role names to paths; its first entry is the primary output
    the manifest file sits beside.
    """
    rid = run_id(command, params)
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "run_id": rid,
        "command": command,
        "scenario": None
        if scenario_path is None
        else {"path": str(scenario_path), "sha256": sha256_file(scenario_path)},
        "seed": seed,
        "parameters": params,
        "outputs": {
            name: {"path": str(path), "sha256": sha256_file(path)} for name, path in outputs.items()
        },
        "tool_version": tool_version(),
    }
    primary = next(iter(outputs.values()))
    path = manifest_path(primary)
    check_write_once([path])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return rid


def read_manifest(path, verify: bool = True) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e.msg})") from e
    if doc.get("schema_version") != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(f"{path}: unsupported manifest schema_version")
    if verify:
        for name, ref in doc["outputs"].items():
            if not os.path.exists(ref["path"]):
                raise SchemaError(f"{path}: output {name!r} missing at {ref['path']}")
            got = sha256_file(ref["path"])
            if got != ref["sha256"]:
                raise SchemaError(
                    f"{path}: checksum mismatch for {name!r} ({ref['path']}): "
                    f"expected {ref['sha256'][:12]}..., got {got[:12]}..."
                )
    return doc
