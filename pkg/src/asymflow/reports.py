"""Small report container used by every verification routine."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class Report:
    check_name: str
    max_violation: float
    n_samples: int
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "check_name": self.check_name,
            "max_violation": _plain(self.max_violation),
            "n_samples": int(self.n_samples),
            "pass": bool(self.passed),
            "details": _plain(self.details),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def __bool__(self) -> bool:
        return self.passed


def make_report(name, violations, tol, n_samples=None, **details) -> Report:
    """Build a report from an array of signed violations (<= 0 means satisfied)."""
    v = np.asarray(violations, dtype=float).ravel()
    worst = float(np.max(v)) if v.size else 0.0
    worst = max(worst, 0.0)
    n = int(v.size if n_samples is None else n_samples)
    return Report(name, worst, n, bool(worst <= tol), dict(details, tolerance=tol))


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if np.isnan(f) or np.isinf(f):
            return str(f)
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj
