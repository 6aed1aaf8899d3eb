"""JSON helpers shared by all artifact writers."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import SchemaVersionError


def check_schema(d: dict, expected: int):
    v = d.get("schema_version")
    if v != expected:
        raise SchemaVersionError(f"unsupported schema_version {v!r}, expected {expected}")


def _default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, fixed indentation, shortest float repr."""
    return json.dumps(obj, default=_default, sort_keys=True, indent=1, allow_nan=True)


def write_json(path, obj):
    """Write atomically so an interrupted run never leaves a half-written artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(dumps(obj) + "\n")
    os.replace(tmp, path)


def read_json(path):
    return json.loads(Path(path).read_text())


def append_jsonl(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_default, sort_keys=True) + "\n")


def read_jsonl(path):
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path, records):
    """Replace ``path`` with one JSON record per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, default=_default, sort_keys=True) + "\n")
    os.replace(tmp, path)
