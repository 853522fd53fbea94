"""One-sided inequality records shared by every audit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import AuditFailure


@dataclass
class AuditRecord:
    """``lhs <= rhs + tol`` together with the data needed to re-check it."""

    name: str
    lhs: float
    rhs: float
    tol: float = 0.0
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.tol)

    @property
    def slack(self) -> float:
        """``rhs / lhs``; infinite when the left side vanishes."""
        if self.lhs <= 0:
            return math.inf
        return self.rhs / self.lhs

    def row(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs, "tol": self.tol,
                "slack": self.slack, "passed": self.passed, **self.detail}


def require(records, strict: bool = True):
    """Raise :class:`AuditFailure` on the first failing record when ``strict``."""
    records = list(records)
    if strict:
        for r in records:
            if not r.passed:
                raise AuditFailure(f"{r.name}: {r.lhs!r} > {r.rhs!r} + {r.tol!r}", r)
    return records
