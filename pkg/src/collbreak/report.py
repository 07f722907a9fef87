"""Pass/fail records shared by the validators and trajectory checks."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one invariant check.

    ``violation`` is the worst observed excess over the allowed bound (0 when
    the bound holds everywhere). ``applicable=False`` marks checks whose
    preconditions are not met; those always report ``passed=True``.
    """

    name: str
    passed: bool
    violation: float
    tolerance: float
    location: str = ""
    applicable: bool = True
    detail: str = ""

    @classmethod
    def from_violation(
        cls,
        name: str,
        violation: float,
        tolerance: float,
        location: str = "",
        detail: str = "",
    ) -> "CheckReport":
        violation = max(float(violation), 0.0)
        tolerance = float(tolerance)
        return cls(name, bool(violation <= tolerance), violation, tolerance, location, True, detail)

    @classmethod
    def not_applicable(cls, name: str, detail: str = "") -> "CheckReport":
        return cls(name, True, 0.0, 0.0, "", False, detail)


def reports_to_json(reports: Iterable[CheckReport], indent: int | None = 2) -> str:
    return json.dumps([asdict(r) for r in reports], indent=indent)


def reports_from_json(text: str) -> list[CheckReport]:
    return [CheckReport(**d) for d in json.loads(text)]


def all_passed(reports: Iterable[CheckReport]) -> bool:
    return all(r.passed for r in reports)
