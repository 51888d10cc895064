"""Check records and deterministic JSON / CSV reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

SCHEMA = "quasilie.report/1"


def fmt_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class Check:
    """``mode="max"``: pass iff value <= tol.  ``mode="min"`` (negative
    controls): pass iff value >= tol."""

    name: str
    value: float
    tol: float
    mode: str = "max"
    note: str = ""

    @property
    def passed(self) -> bool:
        if not math.isfinite(self.value):
            return False
        return self.value <= self.tol if self.mode == "max" else self.value >= self.tol

    def to_dict(self):
        d = {"name": self.name, "value": float(self.value), "tol": float(self.tol), "mode": self.mode,
             "pass": self.passed}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class Report:
    scenario: str
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    wall_time: float = 0.0  # informational; never serialised

    def add(self, name, value, tol, mode="max", note="") -> Check:
        c = Check(name, float(value), float(tol), mode, note)
        self.checks.append(c)
        return c

    def extend(self, other: "Report", prefix: str = ""):
        for c in other.checks:
            self.checks.append(Check(prefix + c.name, c.value, c.tol, c.mode, c.note))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {"schema": SCHEMA, "scenario": self.scenario, "pass": self.passed,
                "checks": [c.to_dict() for c in self.checks],
                "provenance": self.provenance, "data": self.data}

    def to_json(self) -> str:
        return dumps(self.to_dict()) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scenario", "check", "value", "tol", "pass"])
        for c in self.checks:
            w.writerow([self.scenario, c.name, fmt_float(c.value), fmt_float(c.tol), str(c.passed).lower()])
        return buf.getvalue()
