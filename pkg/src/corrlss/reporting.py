"""Deterministic report serialization.

Reports are canonical JSON (sorted keys, shortest-repr floats) so reruns with
the same seed are byte-identical regardless of worker count. Volatile data
(runtimes, timestamps) never enter the report payload; they go to stdout.
Artifacts are named {experiment}-{seed}-{hash(config)} with a content hash of
the canonical resolved config.
"""
from __future__ import annotations

import hashlib
import json
import os
from typing import Optional


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):  # numpy scalar
        return _canonical(obj.item())
    if isinstance(obj, float):
        return obj
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(_canonical(payload), sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:12]


def artifact_name(experiment: str, seed: int, config: dict, ext: str = "json") -> str:
    return f"{experiment}-{seed}-{config_hash(config)}.{ext}"


def write_report(payload: dict, out_dir: str, experiment: str, seed: int, config: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, artifact_name(experiment, seed, config))
    with open(path, "w") as fh:
        fh.write(canonical_json(payload))
        fh.write("\n")
    return path


def write_csv(
    rows, header: list[str], out_dir: str, experiment: str, seed: int, config: dict, tag: Optional[str] = None
) -> str:
    os.makedirs(out_dir, exist_ok=True)
    stem = artifact_name(experiment if tag is None else f"{experiment}-{tag}", seed, config, ext="csv")
    path = os.path.join(out_dir, stem)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row) + "\n")
    return path
