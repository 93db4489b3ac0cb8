"""Canonical JSON and manifest helpers.

Every artifact the CLI writes goes through this module so that reruns with
identical inputs produce byte-identical files. Floats are rounded to nine
significant digits before serialization, keys are sorted, and manifest
timestamps honor SOURCE_DATE_EPOCH.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import math
import os
from typing import Any

__all__ = ["canonical", "dumps", "dump_path", "sha256_file", "write_manifest"]

_SIG_FORMAT = "%.9g"


def _round_float(x: float) -> float:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialize non-finite float {x!r}")
    return float(_SIG_FORMAT % x)


def canonical(value: Any) -> Any:
    """Recursively normalize a JSON-able value for stable serialization."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        return _round_float(value)
    if isinstance(value, dict):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    # numpy scalars and similar duck-typed numbers
    if hasattr(value, "item"):
        return canonical(value.item())
    raise TypeError(f"cannot canonicalize {type(value).__name__}")


def dumps(value: Any) -> str:
    return json.dumps(canonical(value), sort_keys=True, indent=2) + "\n"


def dump_path(path: str, value: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(value))


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    else:
        moment = datetime.datetime.now(tz=datetime.timezone.utc)
    return moment.strftime("%Y-%m-%dT%H:%M:%SZ")


def write_manifest(
    out_path: str,
    command: str,
    parameters: dict[str, Any],
    inputs: dict[str, str],
    tool_version: str,
) -> str:
    """Write ``<out_path>.manifest.json`` describing how ``out_path`` was made.

    ``inputs`` maps logical names to file paths; each is hashed. Returns the
    manifest path.
    """
    manifest = {
        "command": command,
        "parameters": parameters,
        "inputs": {
            name: {"path": path, "sha256": sha256_file(path)}
            for name, path in sorted(inputs.items())
        },
        "output": {"path": out_path, "sha256": sha256_file(out_path)},
        "tool_version": tool_version,
        "timestamp": _timestamp(),
    }
    manifest_path = out_path + ".manifest.json"
    dump_path(manifest_path, manifest)
    return manifest_path
