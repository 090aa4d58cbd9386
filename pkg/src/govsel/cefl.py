"""Candidate expansion and freezing: the non-agentic source of the frozen set."""

from __future__ import annotations

import hashlib
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .domain import (
    FEATURE_AXES,
    AgentCandidate,
    FlagLevel,
    QualityFlag,
    TaskSpec,
    ValidationError,
    canonical_json,
)
from .entropy import RandomStream


class FrozenDigestError(Exception):
    """The frozen candidate set no longer matches its digest."""


@dataclass(frozen=True)
class CeflConfig:
    overshoot_factor: float = 2.0
    jitter_scale: float = 0.05
    empty_pool: bool = False

    def __post_init__(self) -> None:
        if self.overshoot_factor < 1:
            raise ValueError("overshoot_factor must be >= 1")
        if self.jitter_scale < 0:
            raise ValueError("jitter_scale must be >= 0")


def digest_candidates(candidates: Sequence[AgentCandidate]) -> str:
    body = canonical_json([c.to_dict() for c in candidates])
    return hashlib.sha256(body.encode()).hexdigest()


@dataclass(frozen=True)
class FrozenCandidateSet:
    candidates: tuple[AgentCandidate, ...]
    frozen_digest: str
    task_id: str

    @classmethod
    def freeze(cls, candidates: Sequence[AgentCandidate], task_id: str) -> FrozenCandidateSet:
        cands = tuple(candidates)
        return cls(cands, digest_candidates(cands), task_id)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.candidates]

    def __len__(self) -> int:
        return len(self.candidates)

    def verify(self) -> None:
        if digest_candidates(self.candidates) != self.frozen_digest:
            raise FrozenDigestError(f"frozen set for task {self.task_id!r} was altered")


def similarity(requirement: Mapping[str, float], features: Mapping[str, float]) -> float:
    """Cosine similarity of two non-negative axis vectors; 0 if either is zero."""
    if set(requirement) != set(features):
        raise ValidationError("axis mismatch")
    axes = sorted(requirement)
    a = [requirement[k] for k in axes]
    b = [features[k] for k in axes]
    na = math.sqrt(sum(x * x for x in a))
    nb = math.sqrt(sum(x * x for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(x * y for x, y in zip(a, b)) / (na * nb)


def target_size(pool_size: int, overshoot_factor: float, surfaced_size: int) -> int:
    return min(pool_size, math.ceil(overshoot_factor * surfaced_size))


def expand(
    task: TaskSpec,
    pool: Sequence[AgentCandidate],
    stream: RandomStream,
    cfg: CeflConfig,
    surfaced_size: int,
    *,
    boundary: bool = False,
) -> tuple[FrozenCandidateSet, QualityFlag]:
    """Rank ``pool`` by jittered task similarity and freeze the top slice.

    ``surfaced_size`` is m + k.  One jitter draw is consumed per pool member
    in pool order, so the result depends only on the inputs.  An empty pool
    yields an empty frozen set with a DEGRADED flag, CRITICAL when
    ``boundary`` marks the empty-pool ablation.
    """
    if stream.label != "cefl":
        raise ValueError("expand requires the 'cefl' stream")
    if not pool:
        level = FlagLevel.CRITICAL if boundary else FlagLevel.DEGRADED
        return FrozenCandidateSet.freeze((), task.id), QualityFlag(level, "cefl", "empty candidate pool")

    keyed = []
    for c in pool:
        jitter = cfg.jitter_scale * (stream.random() - 0.5)
        feats = {a: c.features[a] for a in FEATURE_AXES}
        keyed.append((-(similarity(task.requirement_vector, feats) + jitter), c.id, c))
    keyed.sort(key=lambda t: (t[0], t[1]))
    n = target_size(len(pool), cfg.overshoot_factor, surfaced_size)
    chosen = [c for _, _, c in keyed[:n]]
    return FrozenCandidateSet.freeze(chosen, task.id), QualityFlag(FlagLevel.NOMINAL, "cefl")
