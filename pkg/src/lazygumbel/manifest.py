"""Run manifests: what was run, on which inputs, producing which outputs.

A manifest is JSON written atomically next to each output. Output
checksums come in two flavours: of the raw bytes, and of the bytes with
timing columns blanked, which is what a re-run must reproduce.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import platform
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from . import __version__
from .formats import atomic_write

SUFFIX = ".manifest.json"


def is_timing_column(name: str) -> bool:
    name = name.strip().lower()
    return name.endswith("_ns") or name.endswith("_s") or "time" in name


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def stable_digest(path) -> str:
    """sha256 of a CSV with its timing columns dropped; other files hash whole.

    JSON outputs drop keys that look like timings, recursively.
    """
    p = Path(path)
    raw = p.read_bytes()
    if p.suffix == ".json":
        try:
            obj = json.loads(raw)
        except ValueError:
            return hashlib.sha256(raw).hexdigest()
        return hashlib.sha256(json.dumps(_drop_timing(obj), sort_keys=True).encode()).hexdigest()
    if p.suffix != ".csv":
        return hashlib.sha256(raw).hexdigest()
    rows = list(csv.reader(io.StringIO(raw.decode("utf-8"))))
    if not rows:
        return hashlib.sha256(raw).hexdigest()
    keep = [i for i, name in enumerate(rows[0]) if not is_timing_column(name)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for r in rows:
        w.writerow([r[i] for i in keep if i < len(r)])
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _drop_timing(obj):
    if isinstance(obj, dict):
        return {k: _drop_timing(v) for k, v in obj.items() if not is_timing_column(k)}
    if isinstance(obj, list):
        return [_drop_timing(v) for v in obj]
    return obj


@dataclass
class RunManifest:
    command: str
    argv: list
    params: dict
    seed: Optional[int] = None
    dataset: Optional[dict] = None    # {"path", "sha256"}
    index: Optional[dict] = None
    outputs: list = field(default_factory=list)   # [{"path", "sha256", "stable_sha256"}]
    results: dict = field(default_factory=dict)   # small scalar results, e.g. build time
    started: float = 0.0
    finished: float = 0.0
    wall_s: float = 0.0
    host: dict = field(default_factory=dict)
    version: str = __version__

    @staticmethod
    def file_entry(path) -> dict:
        return {"path": str(path), "sha256": sha256_file(path)}

    def add_output(self, path):
        self.outputs.append({"path": str(path), "sha256": sha256_file(path),
                             "stable_sha256": stable_digest(path)})

    def finish(self, started: float):
        self.started = started
        self.finished = time.time()
        self.wall_s = self.finished - started
        self.host = {"python": platform.python_version(), "machine": platform.machine(),
                     "system": platform.system()}

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        atomic_write(path, self.to_json())

    @classmethod
    def read(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        fields = cls.__dataclass_fields__
        return cls(**{k: v for k, v in data.items() if k in fields})


def manifest_path_for(output) -> Path:
    return Path(str(output) + SUFFIX)
