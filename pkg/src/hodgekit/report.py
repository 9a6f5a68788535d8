"""Structured pass/fail reports.

Every verification routine returns a ``Report``: a named list of clauses,
each with a boolean verdict, a short human-readable detail string, and an
optional numeric margin.  Reports serialize to JSON with deterministic key
order so repeated runs are byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Clause:
    ident: str
    passed: bool
    detail: str = ""
    margin: float | None = None
    marginal: bool = False

    def to_dict(self):
        d = {"id": self.ident, "passed": bool(self.passed)}
        if self.detail:
            d["detail"] = self.detail
        if self.margin is not None:
            d["margin"] = _fmt_float(self.margin)
        if self.marginal:
            d["marginal"] = True
        return d


@dataclass
class Report:
    name: str
    clauses: list = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, ident, passed, detail="", margin=None, marginal=False):
        self.clauses.append(Clause(ident, bool(passed), detail, margin, marginal))
        return self

    def extend(self, other: "Report", prefix: str = ""):
        for c in other.clauses:
            self.clauses.append(Clause(prefix + c.ident, c.passed, c.detail,
                                       c.margin, c.marginal))
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failing(self):
        return [c for c in self.clauses if not c.passed]

    def clause(self, ident) -> Clause:
        for c in self.clauses:
            if c.ident == ident:
                return c
        raise KeyError(ident)

    def to_dict(self):
        return {
            "name": self.name,
            "passed": self.passed,
            "clauses": [c.to_dict() for c in self.clauses],
            "data": _normalize(self.data),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def summary(self) -> str:
        lines = [f"[{'PASS' if self.passed else 'FAIL'}] {self.name}"]
        for c in self.clauses:
            mark = "ok" if c.passed else "FAIL"
            extra = f"  ({c.detail})" if c.detail else ""
            if c.marginal:
                extra += "  [marginal]"
            lines.append(f"  {mark:4s} {c.ident}{extra}")
        return "\n".join(lines)


def _fmt_float(x):
    return float(f"{float(x):.17g}")


def _normalize(obj):
    """Make report payloads JSON-stable: floats at 17 digits, sorted keys."""
    if isinstance(obj, dict):
        return {str(k): _normalize(obj[k]) for k in sorted(obj, key=str)}
    if isinstance(obj, (list, tuple)):
        return [_normalize(x) for x in obj]
    if isinstance(obj, float):
        return _fmt_float(obj)
    if isinstance(obj, complex):
        return {"re": _fmt_float(obj.real), "im": _fmt_float(obj.imag)}
    return obj
