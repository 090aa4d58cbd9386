"""Presentation gate: rationale and disclosure validation plus order randomization.

The gate only issues a verdict and a permutation. It never edits scores,
membership or rationale content, and a violation blocks the whole output.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .domain import (
    DISCLOSURE_CROSSCHECK,
    REQUIRED_DISCLOSURES,
    TAG_VOCABULARY,
    FlagLevel,
    QualityFlag,
    ScoredCandidate,
)
from .entropy import RandomStream
from .reducer import SurfacedSet


class Verdict(str, Enum):
    PASS = "PASS"
    BLOCKED = "BLOCKED"


@dataclass(frozen=True)
class GateConfig:
    skip_validation: bool = False
    required_disclosures: tuple[str, ...] = REQUIRED_DISCLOSURES
    tolerance: float = 1e-9

    def __post_init__(self) -> None:
        object.__setattr__(self, "required_disclosures", tuple(self.required_disclosures))

    def to_dict(self) -> dict[str, Any]:
        return {
            "skip_validation": self.skip_validation,
            "required_disclosures": list(self.required_disclosures),
            "tolerance": self.tolerance,
        }


@dataclass(frozen=True)
class PresentedEntry:
    scored: ScoredCandidate
    disclosures: Mapping[str, str]

    @property
    def id(self) -> str:
        return self.scored.id

    @property
    def rationale(self):
        return self.scored.rationale


@dataclass(frozen=True)
class PresentedSet:
    entries: tuple[PresentedEntry, ...]
    order_permutation: tuple[int, ...]
    gate_verdict: Verdict
    violations: tuple[str, ...] = ()
    validation_skipped: bool = False
    hint_requests: tuple[Mapping[str, Any], ...] = field(default_factory=tuple)

    @property
    def ids(self) -> list[str]:
        return [e.id for e in self.entries]

    @property
    def flag(self) -> QualityFlag:
        if self.gate_verdict is Verdict.BLOCKED:
            return QualityFlag(FlagLevel.CRITICAL, "gate", "; ".join(self.violations))
        return QualityFlag(FlagLevel.NOMINAL, "gate")


def validate_rationales(surfaced: SurfacedSet | Sequence[ScoredCandidate]) -> list[str]:
    """Violations as ``"<id>: <field> ..."`` strings; empty means PASS."""
    members = surfaced.members if isinstance(surfaced, SurfacedSet) else surfaced
    violations = []
    for s in members:
        r = s.rationale
        if not r.pro:
            violations.append(f"{s.id}: pro arguments empty")
        if not r.con:
            violations.append(f"{s.id}: con arguments empty")
        for arg in (*r.pro, *r.con):
            if arg.tag not in TAG_VOCABULARY:
                violations.append(f"{s.id}: argument tag {arg.tag!r} outside vocabulary")
    return violations


def check_disclosures(
    surfaced: SurfacedSet | Sequence[ScoredCandidate],
    required: Sequence[str],
    tolerance: float = 1e-9,
) -> list[str]:
    members = surfaced.members if isinstance(surfaced, SurfacedSet) else surfaced
    violations = []
    for s in members:
        disclosed = s.candidate.disclosures
        for key in required:
            if key not in disclosed:
                violations.append(f"{s.id}: disclosure {key} missing")
                continue
            axis = DISCLOSURE_CROSSCHECK.get(key)
            if axis is None:
                continue
            try:
                value = float(disclosed[key])
            except ValueError:
                violations.append(f"{s.id}: disclosure {key} not numeric")
                continue
            if not math.isfinite(value) or abs(value - s.candidate.features[axis]) > tolerance:
                violations.append(f"{s.id}: disclosure {key} disagrees with source {axis}")
    return violations


def randomize_order(surfaced: SurfacedSet, stream: RandomStream) -> PresentedSet:
    """Fisher-Yates permutation from the ordering stream.

    Ordering hints are copied into ``hint_requests`` for the audit log and
    play no part in the permutation.
    """
    if stream.label != "ordering":
        raise ValueError("randomize_order requires the 'ordering' stream")
    members = surfaced.members
    perm = tuple(stream.permutation(len(members)))
    entries = tuple(
        PresentedEntry(members[i], dict(members[i].candidate.disclosures)) for i in perm
    )
    hints = tuple(
        {"id": m.id, "hint": m.rationale.ordering_hint}
        for m in members
        if m.rationale.ordering_hint is not None
    )
    return PresentedSet(entries, perm, Verdict.PASS, hint_requests=hints)


def gate(surfaced: SurfacedSet, cfg: GateConfig, stream: RandomStream) -> PresentedSet:
    presented = randomize_order(surfaced, stream)
    if cfg.skip_validation:
        return PresentedSet(
            presented.entries,
            presented.order_permutation,
            Verdict.PASS,
            validation_skipped=True,
            hint_requests=presented.hint_requests,
        )
    violations = validate_rationales(surfaced) + check_disclosures(
        surfaced, cfg.required_disclosures, cfg.tolerance
    )
    if violations:
        return PresentedSet(
            presented.entries,
            presented.order_permutation,
            Verdict.BLOCKED,
            tuple(violations),
            hint_requests=presented.hint_requests,
        )
    return presented
