"""The governed reducer: six fixed stages from scored candidates to the surfaced set.

Stage order is hard-coded in :func:`run_stages`; configuration is a frozen
snapshot taken before the run and nothing in a :class:`ScoredCandidate` is
ever read as configuration.
"""

from __future__ import annotations

import math
import operator
from collections import Counter
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

from .cefl import FrozenCandidateSet
from .domain import (
    SCORE_AXES,
    AgentCandidate,
    AxisScores,
    FlagLevel,
    QualityFlag,
    ScoredCandidate,
    worst_level,
)
from .entropy import RandomStream

STAGES = ("stage1", "stage2", "stage3", "stage4", "stage5", "stage6")
_OPS: dict[str, Callable[[float, float], bool]] = {
    ">=": operator.ge,
    ">": operator.gt,
    "<=": operator.le,
    "<": operator.lt,
}


class MembershipError(Exception):
    """Scored ids differ from the frozen candidate set."""


@dataclass(frozen=True)
class HardConstraint:
    """Either an axis bound on source features or a required disclosure key."""

    axis: str | None = None
    op: str = ">="
    bound: float = 0.0
    disclosure: str | None = None

    def __post_init__(self) -> None:
        if (self.axis is None) == (self.disclosure is None):
            raise ValueError("constraint needs exactly one of axis or disclosure")
        if self.op not in _OPS:
            raise ValueError(f"unknown comparator {self.op!r}")

    def holds(self, candidate: AgentCandidate) -> bool:
        if self.disclosure is not None:
            return self.disclosure in candidate.disclosures
        return _OPS[self.op](candidate.features[self.axis], self.bound)

    def describe(self) -> str:
        if self.disclosure is not None:
            return f"disclosure {self.disclosure} required"
        return f"{self.axis} {self.op} {self.bound}"

    def to_dict(self) -> dict[str, Any]:
        if self.disclosure is not None:
            return {"disclosure": self.disclosure}
        return {"axis": self.axis, "op": self.op, "bound": self.bound}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> HardConstraint:
        if "disclosure" in data:
            return cls(disclosure=str(data["disclosure"]))
        return cls(axis=str(data["axis"]), op=str(data.get("op", ">=")), bound=float(data["bound"]))


@dataclass(frozen=True)
class ReducerConfig:
    sigma_max: float = 0.18
    diversity_buckets: int = 2
    per_axis_threshold: float = 0.3
    m: int = 2
    k: int = 1
    hard_constraints: tuple[HardConstraint, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "hard_constraints", tuple(self.hard_constraints))
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be > 0")
        if self.m < 0 or self.k < 0:
            raise ValueError("m and k must be >= 0")
        if self.diversity_buckets < 1:
            raise ValueError("diversity_buckets must be >= 1")
        if not 0.0 <= self.per_axis_threshold <= 1.0:
            raise ValueError("per_axis_threshold must lie in [0, 1]")

    @property
    def surfaced_size(self) -> int:
        return self.m + self.k

    @property
    def cap_total(self) -> int:
        return self.m + self.k + 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "sigma_max": self.sigma_max,
            "diversity_buckets": self.diversity_buckets,
            "per_axis_threshold": self.per_axis_threshold,
            "m": self.m,
            "k": self.k,
            "hard_constraints": [c.to_dict() for c in self.hard_constraints],
        }


@dataclass(frozen=True)
class StageRecord:
    stage: str
    entering: tuple[str, ...]
    surviving: tuple[str, ...]
    flag: QualityFlag
    detail: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "entering": list(self.entering),
            "surviving": list(self.surviving),
            "flag": self.flag.level.value,
            "reason": self.flag.reason,
            **self.detail,
        }


@dataclass(frozen=True)
class SurfacedSet:
    members: tuple[ScoredCandidate, ...]
    stage_trace: tuple[StageRecord, ...] = ()

    @property
    def ids(self) -> list[str]:
        return [m.id for m in self.members]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Reduction:
    surfaced: SurfacedSet
    flags: tuple[QualityFlag, ...]

    @property
    def no_action(self) -> bool:
        return len(self.surfaced) == 0

    @property
    def worst(self) -> FlagLevel:
        return worst_level(self.flags)


def _ids(items: Sequence[ScoredCandidate]) -> tuple[str, ...]:
    return tuple(s.id for s in items)


# -- stage 1 ---------------------------------------------------------------


def filter_hard_constraints(
    scored: Sequence[ScoredCandidate], cfg: ReducerConfig
) -> tuple[list[ScoredCandidate], QualityFlag]:
    """Drop candidates whose source attributes break any policy predicate."""
    survivors = [s for s in scored if all(c.holds(s.candidate) for c in cfg.hard_constraints)]
    dropped = len(scored) - len(survivors)
    if scored and not survivors:
        flag = QualityFlag(FlagLevel.CRITICAL, "stage1", "all candidates violate hard constraints")
    elif dropped * 2 > len(scored):
        flag = QualityFlag(FlagLevel.DEGRADED, "stage1", f"{dropped}/{len(scored)} dropped by hard constraints")
    else:
        flag = QualityFlag(FlagLevel.NOMINAL, "stage1")
    return survivors, flag


# -- stage 2 ---------------------------------------------------------------


def pstdev(values: Sequence[float]) -> float:
    n = len(values)
    if n == 0:
        return 0.0
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)


def axis_sigmas(scored: Sequence[ScoredCandidate]) -> dict[str, float]:
    if not scored:
        return {a: 0.0 for a in SCORE_AXES}
    return {a: pstdev([getattr(s.scores, a) for s in scored]) for a in SCORE_AXES}


def clamp_variance(
    scored: Sequence[ScoredCandidate], sigma_max: float
) -> tuple[list[ScoredCandidate], QualityFlag]:
    """Shrink any axis whose population sigma exceeds ``sigma_max`` toward its mean.

    s' = mean + (sigma_max / sigma) * (s - mean), clipped to [0, 1].  If
    clipping leaves sigma above the bound the axis collapses to its mean.
    """
    if sigma_max <= 0:
        raise ValueError("sigma_max must be > 0")
    if not scored:
        return [], QualityFlag(FlagLevel.NOMINAL, "stage2")
    columns = {a: [getattr(s.scores, a) for s in scored] for a in SCORE_AXES}
    clamped: list[str] = []
    for axis, values in columns.items():
        sigma = pstdev(values)
        if sigma <= sigma_max:
            continue
        mean = math.fsum(values) / len(values)
        ratio = sigma_max / sigma
        shrunk = [min(1.0, max(0.0, mean + ratio * (v - mean))) for v in values]
        if pstdev(shrunk) > sigma_max + 1e-9:
            shrunk = [mean] * len(values)
        columns[axis] = shrunk
        clamped.append(axis)
    if not clamped:
        return list(scored), QualityFlag(FlagLevel.NOMINAL, "stage2")
    adjusted = [
        replace(s, scores=AxisScores(*(columns[a][i] for a in SCORE_AXES)))
        for i, s in enumerate(scored)
    ]
    return adjusted, QualityFlag(FlagLevel.DEGRADED, "stage2", "variance clamped on " + ",".join(clamped))


# -- stage 3 ---------------------------------------------------------------


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def pareto_frontier(scored: Sequence[ScoredCandidate]) -> list[ScoredCandidate]:
    """Non-dominated candidates in input order; identical vectors all survive.

    Candidates are visited in descending lexicographic order, so every
    dominator of a point is visited before it and it suffices to test
    against the front built so far.
    """
    order = sorted(range(len(scored)), key=lambda i: scored[i].scores.as_tuple(), reverse=True)
    front: list[tuple[float, float, float]] = []
    keep = set()
    for i in order:
        vec = scored[i].scores.as_tuple()
        if any(dominates(f, vec) for f in front):
            continue
        front.append(vec)
        keep.add(i)
    return [s for i, s in enumerate(scored) if i in keep]


# -- stage 4 ---------------------------------------------------------------


def bucket_map(categories: Sequence[str], buckets: int) -> dict[str, int]:
    """Map categories onto at most ``buckets`` groups.

    The most populated categories keep their own bucket; the rest merge into
    the last one.
    """
    counts = Counter(categories)
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    return {c: min(i, buckets - 1) for i, c in enumerate(ranked)}


def partition_diversity(
    scored: Sequence[ScoredCandidate], buckets: int, cap_total: int
) -> list[ScoredCandidate]:
    if buckets < 1:
        raise ValueError("buckets must be >= 1")
    cap = math.ceil(cap_total / buckets)
    mapping = bucket_map([s.category for s in scored], buckets)
    keep: set[str] = set()
    for b in set(mapping.values()):
        members = [s for s in scored if mapping[s.category] == b]
        members.sort(key=lambda s: (-s.scores.mean, s.id))
        keep.update(s.id for s in members[:cap])
    return [s for s in scored if s.id in keep]


# -- stage 5 ---------------------------------------------------------------


def gate_thresholds(
    scored: Sequence[ScoredCandidate], threshold: float, min_survivors: int = 0
) -> tuple[list[ScoredCandidate], QualityFlag]:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    survivors = [s for s in scored if all(v >= threshold for v in s.scores.as_tuple())]
    if scored and not survivors:
        flag = QualityFlag(FlagLevel.CRITICAL, "stage5", f"no candidate meets per-axis threshold {threshold}")
    elif len(survivors) < min_survivors:
        flag = QualityFlag(FlagLevel.DEGRADED, "stage5", f"{len(survivors)} eligible < {min_survivors}")
    else:
        flag = QualityFlag(FlagLevel.NOMINAL, "stage5")
    return survivors, flag


# -- stage 6 ---------------------------------------------------------------


def lottery_weight(s: ScoredCandidate) -> float:
    return s.scores.mean


def lottery_select(
    eligible: Sequence[ScoredCandidate], m: int, k: int, stream: RandomStream
) -> SurfacedSet:
    """m weighted draws without replacement, then k uniform exploration draws.

    Weights are the mean axis score and renormalize after every draw.  The
    surfaced order is the draw order.
    """
    if stream.label != "lottery":
        raise ValueError("lottery_select requires the 'lottery' stream")
    pool = list(eligible)
    picked: list[ScoredCandidate] = []
    for _ in range(min(m, len(pool))):
        weights = [lottery_weight(s) for s in pool]
        total = sum(weights)
        u = stream.random()
        if total <= 0:
            idx = min(int(u * len(pool)), len(pool) - 1)
        else:
            target = u * total
            acc = 0.0
            idx = len(pool) - 1
            for i, w in enumerate(weights):
                acc += w
                if target < acc:
                    idx = i
                    break
        picked.append(pool.pop(idx))
    for _ in range(min(k, len(pool))):
        idx = min(int(stream.random() * len(pool)), len(pool) - 1)
        picked.append(pool.pop(idx))
    return SurfacedSet(tuple(picked))


# -- pipeline --------------------------------------------------------------


def run_stages(
    scored: Sequence[ScoredCandidate], cfg: ReducerConfig, stream: RandomStream
) -> Reduction:
    """Apply stages 1-6 in fixed order, short-circuiting on an empty set."""
    trace: list[StageRecord] = []
    flags: list[QualityFlag] = []

    def done(current: Sequence[ScoredCandidate] = ()) -> Reduction:
        return Reduction(SurfacedSet(tuple(current), tuple(trace)), tuple(f for f in flags if f.level is not FlagLevel.NOMINAL))

    def record(stage: str, entering, surviving, flag: QualityFlag, **detail: Any) -> None:
        trace.append(StageRecord(stage, _ids(entering), _ids(surviving), flag, detail))
        flags.append(flag)

    current = list(scored)
    if not current:
        return done()

    survivors, flag = filter_hard_constraints(current, cfg)
    record("stage1", current, survivors, flag,
           constraints=[c.describe() for c in cfg.hard_constraints])
    if not survivors:
        return done()
    current = survivors

    before = axis_sigmas(current)
    adjusted, flag = clamp_variance(current, cfg.sigma_max)
    record("stage2", current, adjusted, flag, sigma_max=cfg.sigma_max,
           sigma_before=before, sigma_after=axis_sigmas(adjusted),
           scores={s.id: list(s.scores.as_tuple()) for s in adjusted})
    current = adjusted

    survivors = pareto_frontier(current)
    record("stage3", current, survivors, QualityFlag(FlagLevel.NOMINAL, "stage3"))
    current = survivors

    survivors = partition_diversity(current, cfg.diversity_buckets, cfg.cap_total)
    cap = math.ceil(cfg.cap_total / cfg.diversity_buckets)
    record("stage4", current, survivors, QualityFlag(FlagLevel.NOMINAL, "stage4"),
           cap=cap, buckets={c: b for c, b in sorted(bucket_map([s.category for s in current], cfg.diversity_buckets).items())})
    current = survivors

    survivors, flag = gate_thresholds(current, cfg.per_axis_threshold, cfg.surfaced_size)
    record("stage5", current, survivors, flag, threshold=cfg.per_axis_threshold)
    if not survivors:
        return done()
    current = survivors

    surfaced = lottery_select(current, cfg.m, cfg.k, stream)
    record("stage6", current, surfaced.members, QualityFlag(FlagLevel.NOMINAL, "stage6"),
           weights={s.id: lottery_weight(s) for s in current}, m=cfg.m, k=cfg.k)
    return done(surfaced.members)


def reduce(
    frozen: FrozenCandidateSet,
    scored: Sequence[ScoredCandidate],
    cfg: ReducerConfig,
    stream: RandomStream,
) -> Reduction:
    """Verify the frozen set and membership, then run the six stages.

    Raises :class:`~govsel.cefl.FrozenDigestError` or :class:`MembershipError`;
    the caller turns either into a BLOCKED run.
    """
    frozen.verify()
    given = {s.id: s.candidate for s in scored}
    if len(given) != len(scored) or given != {c.id: c for c in frozen.candidates}:
        raise MembershipError("scored candidates differ from the frozen set")
    return run_stages(scored, cfg, stream)
