"""Shared value types for candidates, tasks, scores, rationales and outcomes."""

from __future__ import annotations

import json
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Any

FEATURE_AXES = ("risk_safety", "stability", "latency", "auditability")
SCORE_AXES = ("utility", "risk_safety", "stability")
TAG_VOCABULARY = ("utility", "risk", "stability", "latency", "auditability", "compliance")
AXIS_TAG = {
    "utility": "utility",
    "risk_safety": "risk",
    "stability": "stability",
    "latency": "latency",
    "auditability": "auditability",
}
REQUIRED_DISCLOSURES = ("regulatory_compliance", "latency", "auditability_score")
# disclosure key -> feature axis it must agree with
DISCLOSURE_CROSSCHECK = {"latency": "latency", "auditability_score": "auditability"}


class ValidationError(ValueError):
    """A domain value violates one of its invariants."""


class FlagLevel(str, Enum):
    NOMINAL = "NOMINAL"
    DEGRADED = "DEGRADED"
    CRITICAL = "CRITICAL"

    @property
    def rank(self) -> int:
        return _FLAG_RANK[self]


_FLAG_RANK = {FlagLevel.NOMINAL: 0, FlagLevel.DEGRADED: 1, FlagLevel.CRITICAL: 2}


class OutcomeKind(str, Enum):
    SURFACED = "SURFACED"
    NO_ACTION = "NO_ACTION"
    BLOCKED = "BLOCKED"


@dataclass(frozen=True)
class QualityFlag:
    level: FlagLevel
    source: str
    reason: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.level, FlagLevel):
            object.__setattr__(self, "level", FlagLevel(self.level))

    def to_dict(self) -> dict[str, str]:
        return {"level": self.level.value, "source": self.source, "reason": self.reason}


def worst_level(flags: Iterable[QualityFlag]) -> FlagLevel:
    worst = FlagLevel.NOMINAL
    for f in flags:
        if f.level.rank > worst.rank:
            worst = f.level
    return worst


@dataclass(frozen=True)
class RunOutcome:
    kind: OutcomeKind
    detail: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"kind": self.kind.value, "detail": self.detail}


def _freeze(mapping: Mapping[str, Any]) -> Mapping[str, Any]:
    return MappingProxyType(dict(mapping))


def _pairs(value: Mapping[str, str] | Iterable[tuple[str, str]], what: str) -> dict[str, str]:
    if isinstance(value, Mapping):
        return dict(value)
    out: dict[str, str] = {}
    for key, item in value:
        if key in out:
            raise ValidationError(f"duplicate {what} key {key!r}")
        out[key] = item
    return out


@dataclass(frozen=True)
class AgentCandidate:
    """A selectable agent: features in [0, 1], disclosures and a diversity category."""

    id: str
    features: Mapping[str, float]
    disclosures: Mapping[str, str] = field(default_factory=dict)
    category: str = "general"

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", _freeze(self.features))
        object.__setattr__(self, "disclosures", _freeze(_pairs(self.disclosures, "disclosure")))

    def feature_vector(self) -> tuple[float, ...]:
        return tuple(self.features[a] for a in FEATURE_AXES)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "features": {a: self.features[a] for a in sorted(self.features)},
            "disclosures": {k: self.disclosures[k] for k in sorted(self.disclosures)},
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AgentCandidate:
        return cls(
            id=str(data["id"]),
            features={k: float(v) for k, v in data["features"].items()},
            disclosures=_pairs(data.get("disclosures", {}), "disclosure"),
            category=str(data.get("category", "general")),
        )


def validate_candidate(c: AgentCandidate) -> None:
    """Raise :class:`ValidationError` naming the first violated field."""
    for axis in FEATURE_AXES:
        if axis not in c.features:
            raise ValidationError(f"missing axis {axis!r}")
    for axis, value in c.features.items():
        if axis not in FEATURE_AXES:
            raise ValidationError(f"unknown axis {axis!r}")
        if not (isinstance(value, (int, float)) and math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ValidationError(f"{axis} out of range")
    if not c.id:
        raise ValidationError("id must be non-empty")


def validate_pool(pool: Iterable[AgentCandidate]) -> None:
    seen: set[str] = set()
    for c in pool:
        validate_candidate(c)
        if c.id in seen:
            raise ValidationError(f"duplicate candidate id {c.id!r}")
        seen.add(c.id)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    scenario: str
    requirement_vector: Mapping[str, float]
    description: str = ""

    def __post_init__(self) -> None:
        if set(self.requirement_vector) != set(FEATURE_AXES):
            raise ValidationError("requirement_vector axes must match candidate feature axes")
        for axis, v in self.requirement_vector.items():
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"requirement {axis} out of range")
        object.__setattr__(self, "requirement_vector", _freeze(self.requirement_vector))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "scenario": self.scenario,
            "requirement_vector": {a: self.requirement_vector[a] for a in FEATURE_AXES},
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TaskSpec:
        return cls(
            id=str(data["id"]),
            scenario=str(data["scenario"]),
            requirement_vector={k: float(v) for k, v in data["requirement_vector"].items()},
            description=str(data.get("description", "")),
        )


@dataclass(frozen=True)
class AxisScores:
    """Scores on the three governed axes, all oriented higher-is-better."""

    utility: float
    risk_safety: float
    stability: float

    def __post_init__(self) -> None:
        for axis in SCORE_AXES:
            v = getattr(self, axis)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"score {axis}={v} out of [0,1]")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.utility, self.risk_safety, self.stability)

    @property
    def mean(self) -> float:
        return (self.utility + self.risk_safety + self.stability) / 3.0

    @classmethod
    def from_seq(cls, values: Iterable[float]) -> AxisScores:
        u, r, s = (min(1.0, max(0.0, float(v))) for v in values)
        return cls(u, r, s)


@dataclass(frozen=True)
class Argument:
    tag: str
    text: str = ""

    def to_dict(self) -> dict[str, str]:
        return {"tag": self.tag, "text": self.text}


@dataclass(frozen=True)
class Rationale:
    pro: tuple[Argument, ...]
    con: tuple[Argument, ...]
    ordering_hint: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "pro", tuple(self.pro))
        object.__setattr__(self, "con", tuple(self.con))

    def tags(self) -> list[str]:
        return [a.tag for a in self.pro] + [a.tag for a in self.con]

    def to_dict(self) -> dict[str, Any]:
        return {
            "pro": [a.to_dict() for a in self.pro],
            "con": [a.to_dict() for a in self.con],
            "ordering_hint": self.ordering_hint,
        }


def validate_rationale(r: Rationale) -> None:
    for side in ("pro", "con"):
        for arg in getattr(r, side):
            if arg.tag not in TAG_VOCABULARY:
                raise ValidationError(f"{side} argument tag {arg.tag!r} outside vocabulary")


def canonical_json(obj: Any) -> str:
    """Stable serialization used for digests and audit lines."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dump_pool(pool: Iterable[AgentCandidate]) -> str:
    return canonical_json([c.to_dict() for c in pool])


def load_pool(text: str) -> list[AgentCandidate]:
    def hook(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
        keys = [k for k, _ in pairs]
        if len(keys) != len(set(keys)):
            dup = next(k for k in keys if keys.count(k) > 1)
            raise ValidationError(f"duplicate key {dup!r}")
        return dict(pairs)

    pool = [AgentCandidate.from_dict(d) for d in json.loads(text, object_pairs_hook=hook)]
    validate_pool(pool)
    return pool


@dataclass(frozen=True)
class ScoredCandidate:
    candidate: AgentCandidate
    scores: AxisScores
    rationale: Rationale

    @property
    def id(self) -> str:
        return self.candidate.id

    @property
    def category(self) -> str:
        return self.candidate.category
