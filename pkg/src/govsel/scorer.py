"""Simulated scoring agent and the adversarial strategies it can play.

The scorer sees the frozen candidate set and nothing else unless an
ablation hands it a :class:`ReducerExposure` carrying thresholds or entropy.
It can rewrite scores and rationales; it can never add or remove candidates.
"""

from __future__ import annotations

import hashlib
import logging
import random
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

from .cefl import FrozenCandidateSet, similarity
from .domain import (
    AXIS_TAG,
    FEATURE_AXES,
    SCORE_AXES,
    Argument,
    AxisScores,
    Rationale,
    ScoredCandidate,
    TaskSpec,
)
from .entropy import VerifiedEntropy, derive_stream
from .reducer import ReducerConfig, run_stages

log = logging.getLogger(__name__)

# what a blind attacker assumes the per-axis gate to be
ASSUMED_THRESHOLD = 0.3
PHASE_FACTOR = {"high": 1.1, "low": 0.9}


class AttackKind(str, Enum):
    NONE = "NONE"
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"
    A5 = "A5"


ATTACK_LABELS = {
    AttackKind.A1: "variance inflation",
    AttackKind.A2: "threshold bracketing",
    AttackKind.A3: "framing skew",
    AttackKind.A4: "ordering",
    AttackKind.A5: "entropy probing",
    AttackKind.NONE: "none",
}


@dataclass(frozen=True)
class AttackSpec:
    kind: AttackKind = AttackKind.NONE
    target_id: str | None = None
    alpha: float = 1.5
    epsilon: float = 0.02
    skew: int = 3
    phase: str = "high"

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.alpha <= 1:
            raise ValueError("alpha must be > 1")
        if not 0 < self.epsilon < 0.1:
            raise ValueError("epsilon must lie in (0, 0.1)")
        if self.skew < 1:
            raise ValueError("skew must be >= 1")
        if self.phase not in PHASE_FACTOR:
            raise ValueError(f"unknown phase {self.phase!r}")

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": self.kind.value,
            "target_id": self.target_id,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "skew": self.skew,
            "phase": self.phase,
        }


@dataclass(frozen=True)
class ReducerExposure:
    """Capabilities an ablation leaks to the scorer; empty by default."""

    thresholds: float | None = None
    entropy: VerifiedEntropy | None = field(default=None, repr=False)
    # public architecture the attacker simulates when it holds entropy
    assumed_config: ReducerConfig = field(default_factory=ReducerConfig)


def _seeded_rng(seed: int, *parts: str) -> random.Random:
    material = ":".join([str(seed), *parts]).encode()
    return random.Random(int.from_bytes(hashlib.sha256(material).digest(), "big"))


def _clip(v: float) -> float:
    return min(1.0, max(0.0, v))


def build_rationale(candidate_features: dict[str, float], utility: float, compliance: str) -> Rationale:
    """Pro arguments from the two strongest feature axes, con from the weakest."""
    ranked = sorted(FEATURE_AXES, key=lambda a: (-candidate_features[a], a))
    pro = [Argument(AXIS_TAG[a], f"{a} {candidate_features[a]:.2f}") for a in ranked[:2]]
    con = [Argument(AXIS_TAG[ranked[-1]], f"{ranked[-1]} {candidate_features[ranked[-1]]:.2f}")]
    if utility >= 0.9:
        pro.append(Argument("utility", f"task fit {utility:.2f}"))
    if compliance != "compliant":
        con.append(Argument("compliance", f"regulatory status {compliance}"))
    return Rationale(tuple(pro), tuple(con))


def base_score(
    frozen: FrozenCandidateSet, task: TaskSpec, seed: int, noise_scale: float
) -> list[ScoredCandidate]:
    """Score every frozen candidate; deterministic in ``(frozen, task, seed, noise_scale)``."""
    frozen.verify()
    rng = _seeded_rng(seed, "scorer", frozen.task_id)
    out = []
    for c in frozen.candidates:
        feats = {a: c.features[a] for a in FEATURE_AXES}
        utility = _clip(similarity(task.requirement_vector, feats))
        noise_r = rng.uniform(-noise_scale, noise_scale)
        noise_s = rng.uniform(-noise_scale, noise_scale)
        scores = AxisScores(
            utility,
            _clip(c.features["risk_safety"] + noise_r),
            _clip(c.features["stability"] + noise_s),
        )
        rationale = build_rationale(feats, utility, c.disclosures.get("regulatory_compliance", ""))
        out.append(ScoredCandidate(c, scores, rationale))
    return out


def choose_target(scored: Sequence[ScoredCandidate]) -> str | None:
    """The candidate the adversary sponsors: the runner-up by mean base score.

    Backing the favourite gains nothing, so the adversary promotes the
    second-best candidate (ids break ties; a singleton set sponsors its only
    member).
    """
    if not scored:
        return None
    ranked = sorted(scored, key=lambda s: (-s.scores.mean, s.id))
    return ranked[min(1, len(ranked) - 1)].id


def _scaled(scored: Sequence[ScoredCandidate], factor: float) -> list[ScoredCandidate]:
    return [
        replace(s, scores=AxisScores.from_seq(v * factor for v in s.scores.as_tuple()))
        for s in scored
    ]


def choose_probe_phase(
    scored: Sequence[ScoredCandidate], spec: AttackSpec, exposure: ReducerExposure
) -> str:
    """Phase an entropy-probing attacker plays.

    Blind attackers keep the scheduled phase.  With leaked entropy the
    attacker replays the public reducer on both phases and keeps the one that
    surfaces its target, falling back to the schedule when both or neither do.
    """
    if exposure.entropy is None or spec.target_id is None:
        return spec.phase
    hits = {}
    for phase, factor in PHASE_FACTOR.items():
        stream = derive_stream(exposure.entropy, "lottery")
        result = run_stages(_scaled(scored, factor), exposure.assumed_config, stream)
        hits[phase] = spec.target_id in result.surfaced.ids
    if hits[spec.phase] or not any(hits.values()):
        return spec.phase
    return next(p for p, hit in hits.items() if hit)


def apply_attack(
    scored: Sequence[ScoredCandidate], spec: AttackSpec, exposure: ReducerExposure
) -> list[ScoredCandidate]:
    kind = spec.kind
    if kind is AttackKind.NONE:
        return list(scored)
    ids = [s.id for s in scored]
    if kind is not AttackKind.A2 and kind is not AttackKind.A5 and spec.target_id not in ids:
        # an empty set has nothing to target; a named but absent target is worth a warning
        level = logging.DEBUG if spec.target_id is None else logging.WARNING
        log.log(level, "attack %s target %r not in candidate set; no-op", kind.value, spec.target_id)
        return list(scored)

    if kind is AttackKind.A1:
        n = len(scored)
        means = [sum(s.scores.as_tuple()[i] for s in scored) / n for i in range(len(SCORE_AXES))]
        out = []
        for s in scored:
            if s.id == spec.target_id:
                vals = (m + spec.alpha * (v - m) for v, m in zip(s.scores.as_tuple(), means))
                s = replace(s, scores=AxisScores.from_seq(vals))
            out.append(s)
        return out

    if kind is AttackKind.A2:
        gate = exposure.thresholds if exposure.thresholds is not None else ASSUMED_THRESHOLD
        level = _clip(gate + spec.epsilon)
        return [replace(s, scores=AxisScores(level, level, level)) for s in scored]

    if kind is AttackKind.A3:
        out = []
        for s in scored:
            if s.id == spec.target_id:
                r = s.rationale
                extra_tags = [a.tag for a in r.pro] or ["utility"]
                extra = tuple(
                    Argument(extra_tags[i % len(extra_tags)], "emphasised strength")
                    for i in range(spec.skew)
                )
                s = replace(s, rationale=replace(r, pro=r.pro + extra, con=r.con[:1]))
            out.append(s)
        return out

    if kind is AttackKind.A4:
        return [
            replace(s, rationale=replace(s.rationale, ordering_hint=0)) if s.id == spec.target_id else s
            for s in scored
        ]

    phase = choose_probe_phase(scored, spec, exposure)
    return _scaled(scored, PHASE_FACTOR[phase])
