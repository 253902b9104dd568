"""Deterministic CSV/JSON writers and the run manifest.

CSV: comma separated, header row, LF line endings, reals with 17
significant digits (exact round trip). JSON: sorted keys, shortest
round-trip floats, non-finite values as the strings ``"inf"``, ``"-inf"``,
``"nan"``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(value)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else fmt(v)
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(dumps(obj))
    return path


def write_lines(path, lines) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for line in lines:
            fh.write(f"{line}\n")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Config echo, tool version, wall-clock and a checksum for every output file."""

    config: dict
    version: str
    wall_clock_seconds: float
    started_utc: str
    outputs: dict[str, str] = field(default_factory=dict)

    @classmethod
    def collect(cls, outdir, files, config: dict, version: str, wall: float, started: str) -> "RunManifest":
        outdir = Path(outdir)
        outs = {os.path.relpath(f, outdir): sha256(f) for f in sorted(map(str, files))}
        return cls(config, version, wall, started, outs)

    def write(self, outdir) -> Path:
        return write_json(Path(outdir) / "manifest.json", {
            "config": self.config,
            "version": self.version,
            "wall_clock_seconds": self.wall_clock_seconds,
            "started_utc": self.started_utc,
            "outputs": self.outputs,
        })

    def verify(self, outdir) -> list[str]:
        """Names of listed files that are missing or whose checksum changed."""
        bad = []
        for name, digest in self.outputs.items():
            p = Path(outdir) / name
            if not p.exists() or sha256(p) != digest:
                bad.append(name)
        return bad

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(d["config"], d["version"], d["wall_clock_seconds"], d["started_utc"], d["outputs"])
