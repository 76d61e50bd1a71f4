"""Run ledger: append-only record of everything a run did.

Serialized as JSON; floats go through repr so a reload reproduces every
diagnostic bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

DIAGNOSTIC_COLUMNS = ("t", "l1_total", "linf_total", "pos_min", "div_max", "dt", "bs_iters")


def content_hash(doc: dict) -> str:
    """sha256 of the canonical JSON form of a config document."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


@dataclass
class RunLedger:
    config: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    input_hash: str = ""
    schema_version: int = 1
    diagnostics: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    calibration: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    def append_diagnostics(self, row: dict) -> None:
        self.diagnostics.append(dict(row))

    def append_checkpoint(self, entry: dict) -> None:
        self.checkpoints.append(dict(entry))

    def flag(self, message: str) -> None:
        self.flags.append(message)

    def record_timing(self, label: str, seconds: float) -> None:
        self.timings[label] = self.timings.get(label, 0.0) + seconds

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "solver": self.solver,
            "input_hash": self.input_hash,
            "diagnostics": self.diagnostics,
            "checkpoints": self.checkpoints,
            "calibration": self.calibration,
            "flags": self.flags,
            "timings": self.timings,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunLedger":
        led = cls(config=doc.get("config", {}),
                  solver=doc.get("solver", {}),
                  input_hash=doc.get("input_hash", ""),
                  schema_version=doc.get("schema_version", 1))
        led.diagnostics = list(doc.get("diagnostics", []))
        led.checkpoints = list(doc.get("checkpoints", []))
        led.calibration = dict(doc.get("calibration", {}))
        led.flags = list(doc.get("flags", []))
        led.timings = dict(doc.get("timings", {}))
        return led

    @classmethod
    def from_json(cls, text: str) -> "RunLedger":
        return cls.from_dict(json.loads(text))


class Stopwatch:
    """Accumulates wall-clock intervals into a ledger timing slot."""

    def __init__(self, ledger: RunLedger, label: str):
        self.ledger = ledger
        self.label = label

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.ledger.record_timing(self.label, time.perf_counter() - self._start)
        return False
