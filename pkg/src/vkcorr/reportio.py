"""Deterministic serialization of reports: JSON with sorted keys, CSV tables.

Identical runs must produce byte-identical files, so no timestamps, no
environment echoes, and floats go through Python's shortest round-trip repr.
"""

from __future__ import annotations

import json
import os
from typing import Iterable

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(x) for x in obj]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(x) for x in obj.tolist()]
    return obj


def dump_json(obj: dict, path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def dump_csv(path: str, header: Iterable[str], rows: Iterable[Iterable]):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(x)) if isinstance(x, (float, np.floating))
                              else str(x) for x in row) + "\n")


SCHEMA_VERSION = 1


def wrap_report(kind: str, payload: dict, config: dict) -> dict:
    """Envelope shared by all emitted reports."""
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": payload_config(config),
        "report": payload,
    }


def payload_config(config: dict) -> dict:
    return _clean(config)
