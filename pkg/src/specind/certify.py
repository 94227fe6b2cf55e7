"""Pass/fail records for numerically certified inequalities."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .instance import Instance, ListColoringInstance

PASS, FAIL, SKIP, INAPPLICABLE = "pass", "fail", "skip", "inapplicable"


def describe(inst: Instance) -> dict:
    """Canonical JSON-able description of an instance."""
    out = {
        "name": inst.name,
        "n": inst.n,
        "q": inst.q,
        "edges": [list(e) for e in inst.graph.edges],
        "origin": list(inst.origin),
        "pinned": [list(p) for p in inst.pinned],
    }
    if isinstance(inst, ListColoringInstance):
        out["model"] = "coloring"
        out["lists"] = [list(L) for L in inst.lists]
    else:
        out["model"] = "spin"
        out["A"] = np.round(inst.A, 15).tolist()
        out["h"] = np.round(inst.h, 15).tolist()
        if inst.vertex_fields is not None:
            out["vertex_fields"] = np.round(inst.vertex_fields, 15).tolist()
    return out


def instance_digest(inst: Instance) -> str:
    blob = json.dumps(describe(inst), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


@dataclass
class Certificate:
    inequality_id: str
    lhs: float | None
    rhs: float | None
    tolerance: float
    status: str = ""
    instance: str = ""
    provenance: dict = field(default_factory=lambda: {"lhs": "exact", "rhs": "exact"})
    detail: dict = field(default_factory=dict)
    reason: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = PASS if self.slack >= -self.tolerance else FAIL

    @property
    def slack(self) -> float:
        if self.lhs is None or self.rhs is None:
            return math.nan
        return float(self.rhs) - float(self.lhs)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    @classmethod
    def skipped(cls, inequality_id: str, reason: str, instance: str = "", **detail):
        return cls(inequality_id, None, None, 0.0, SKIP, instance, reason=reason, detail=detail)

    @classmethod
    def not_applicable(cls, inequality_id: str, reason: str, instance: str = "", **detail):
        return cls(inequality_id, None, None, 0.0, INAPPLICABLE, instance, reason=reason,
                   detail=detail)

    def to_dict(self) -> dict:
        return {
            "inequality_id": self.inequality_id,
            "lhs": _num(self.lhs),
            "rhs": _num(self.rhs),
            "slack": _num(self.slack) if self.lhs is not None and self.rhs is not None else None,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "status": self.status,
            "instance_digest": self.instance,
            "provenance": self.provenance,
            "reason": self.reason,
            "detail": _jsonable(self.detail),
        }


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return _num(x)
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def tally(certs) -> dict:
    out = {PASS: 0, FAIL: 0, SKIP: 0, INAPPLICABLE: 0}
    for c in certs:
        out[c.status] += 1
    return out
