"""Append-only progress journal so long sweeps can resume."""
from __future__ import annotations

import hashlib
import json
import os

import numpy as np


def theta_key(theta, tag: str = "") -> str:
    """Stable hash of a parameter vector (rounded to 12 significant digits)."""
    vals = ",".join(f"{v:.12g}" for v in np.asarray(theta, float).ravel())
    return hashlib.sha1(f"{tag}|{vals}".encode()).hexdigest()[:20]


class Journal:
    """JSON-lines file of finished records keyed by :func:`theta_key`.

    A ``None`` path gives an in-memory journal that never touches disk.
    """

    def __init__(self, path: str | os.PathLike | None):
        self.path = path
        self.records: dict = {}
        if path is not None and os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                    except json.JSONDecodeError:
                        continue   # a torn final line from an interrupted run
                    self.records[rec["key"]] = rec

    def __contains__(self, key: str) -> bool:
        return key in self.records

    def get(self, key: str):
        return self.records.get(key)

    def add(self, key: str, record: dict) -> None:
        rec = dict(record, key=key)
        self.records[key] = rec
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(rec) + "\n")
