"""Test-classification tags and the coverage matrix built from them."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from ..errors import ValidationError


class Level(str, enum.Enum):
    UNIT = "UNIT"
    INTEGRATION = "INTEGRATION"
    SYSTEM = "SYSTEM"
    ACCEPTANCE = "ACCEPTANCE"


class Fidelity(str, enum.Enum):
    SIL = "SIL"
    HIL = "HIL"
    REAL = "REAL"


class Complexity(str, enum.Enum):
    SIMPLE = "SIMPLE"
    MODERATE = "MODERATE"
    EDGE = "EDGE"


CHALLENGES: dict[str, str] = {
    "C1": "terrain obstacles",
    "C2": "ground-distance inconsistency",
    "C3": "geolocation error",
    "C4": "GPS error",
    "C5": "gimbal sensing",
    "C6": "visual detection",
    "C7": "resources and timing",
    "C8": "situational awareness",
}


def _enum(cls, value, what):
    if isinstance(value, cls):
        return value
    try:
        return cls(str(value).upper())
    except ValueError:
        raise ValidationError(f"unknown {what} {value!r}; expected one of {[m.value for m in cls]}") from None


@dataclass(frozen=True)
class TestTag:
    """Position of one test in the level x fidelity x complexity space."""

    __test__ = False  # keep pytest from collecting this class

    level: Level
    fidelity: Fidelity = Fidelity.SIL
    complexity: Complexity = Complexity.SIMPLE
    challenges: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "level", _enum(Level, self.level, "test level"))
        object.__setattr__(self, "fidelity", _enum(Fidelity, self.fidelity, "fidelity"))
        object.__setattr__(self, "complexity", _enum(Complexity, self.complexity, "complexity"))
        ch = frozenset(str(c).upper() for c in self.challenges)
        bad = sorted(ch - set(CHALLENGES))
        if bad:
            raise ValidationError(f"unknown challenge ids {bad}")
        object.__setattr__(self, "challenges", ch)

    def to_dict(self) -> dict:
        return {
            "level": self.level.value,
            "fidelity": self.fidelity.value,
            "complexity": self.complexity.value,
            "challenges": sorted(self.challenges),
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TestTag":
        if not isinstance(doc, Mapping):
            raise ValidationError("tags must be an object")
        return cls(
            doc.get("level", Level.SYSTEM),
            doc.get("fidelity", Fidelity.SIL),
            doc.get("complexity", Complexity.MODERATE),
            frozenset(doc.get("challenges", ())),
        )


@dataclass(frozen=True)
class TaxonomyReport:
    counts: dict[tuple[Level, Fidelity, Complexity], dict[str, int]]
    covered: tuple[str, ...]
    uncovered: tuple[str, ...]

    def to_dict(self) -> dict:
        cells = []
        for (lv, fd, cx), c in self.counts.items():
            cells.append({"level": lv.value, "fidelity": fd.value, "complexity": cx.value, **c})
        return {"matrix": cells, "challenge_coverage": list(self.covered), "uncovered_challenges": list(self.uncovered)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_table(self) -> str:
        lines = []
        header = f"{'level':<12}{'complexity':<11}" + "".join(f"{f.value:>10}" for f in Fidelity)
        lines.append(header)
        for lv in Level:
            for cx in Complexity:
                row = f"{lv.value:<12}{cx.value:<11}"
                for fd in Fidelity:
                    c = self.counts[(lv, fd, cx)]
                    row += f"{c['passed']:>5}/{c['total']:<4}"
                lines.append(row)
        lines.append("")
        for cid, desc in CHALLENGES.items():
            mark = "covered" if cid in self.covered else "UNCOVERED"
            lines.append(f"{cid} {desc:<30} {mark}")
        return "\n".join(lines)


def taxonomy_report(results: Iterable[tuple[TestTag, bool]]) -> TaxonomyReport:
    """Count tests per matrix cell and list challenges with a passing test."""
    counts = {
        (lv, fd, cx): {"total": 0, "passed": 0, "failed": 0}
        for lv in Level for fd in Fidelity for cx in Complexity
    }
    covered: set[str] = set()
    for tag, passed in results:
        c = counts[(tag.level, tag.fidelity, tag.complexity)]
        c["total"] += 1
        c["passed" if passed else "failed"] += 1
        if passed:
            covered |= tag.challenges
    order = list(CHALLENGES)
    return TaxonomyReport(
        counts,
        tuple(c for c in order if c in covered),
        tuple(c for c in order if c not in covered),
    )
