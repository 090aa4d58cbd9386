"""Cell metrics computed from run records (in memory or replayed from JSONL).

All functions take plain record dicts so that values computed during a run
and values recomputed from the audit log go through the same code.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from .reducer import pstdev

Record = Mapping[str, Any]

SURFACED = "SURFACED"
A3_RATIO_BOUND = 2.0


def _surfaced(r: Record) -> bool:
    return r["outcome"]["kind"] == SURFACED


def shannon_bits(labels: Iterable[str]) -> float:
    counts = Counter(labels)
    total = sum(counts.values())
    if total == 0:
        return 0.0
    h = -sum((c / total) * math.log2(c / total) for c in counts.values())
    return max(0.0, h)


def sri(records: Sequence[Record]) -> float:
    """Max over candidates of P(y in S2) minus 1/|S2|, clipped at 0.

    Inclusion is counted over all runs, blocked ones contributing nothing;
    |S2| is the modal size among surfaced runs.
    """
    if not records:
        return 0.0
    sizes = Counter(len(r["surfaced"]) for r in records if _surfaced(r))
    if not sizes:
        return 0.0
    modal = max(sizes, key=lambda n: (sizes[n], n))
    inclusion = Counter(y for r in records if _surfaced(r) for y in r["surfaced"])
    best = max(inclusion.values()) / len(records)
    return max(0.0, best - 1.0 / modal)


def presented_tags(r: Record) -> list[str]:
    if not _surfaced(r) or r.get("gate") is None:
        return []
    tags = []
    for cid in r["gate"]["presented"]:
        rat = r["rationales"][cid]
        tags.extend(a["tag"] for a in rat["pro"])
        tags.extend(a["tag"] for a in rat["con"])
    return tags


def run_framing_entropy(r: Record) -> float:
    return shannon_bits(presented_tags(r))


def framing_entropy(records: Sequence[Record]) -> float:
    if not records:
        return 0.0
    return sum(run_framing_entropy(r) for r in records) / len(records)


def attack_success(r: Record) -> bool:
    """Did the attack bias surfaced output without being blocked?"""
    attack = r["attack"]
    target = r.get("target")
    if attack == "NONE" or target is None or not _surfaced(r):
        return False
    if attack in ("A1", "A2", "A5"):
        return target in r["surfaced"]
    if attack == "A3":
        if target not in r["gate"]["presented"]:
            return False
        rat = r["rationales"][target]
        pro, con = len(rat["pro"]), len(rat["con"])
        return con == 0 or pro / con > A3_RATIO_BOUND
    if attack == "A4":
        presented = r["gate"]["presented"]
        return bool(presented) and presented[0] == target and bool(r["gate"]["hint_consulted"])
    raise ValueError(f"unknown attack {attack!r}")


def asr(records: Sequence[Record]) -> float | None:
    if not records or records[0]["attack"] == "NONE":
        return None
    return sum(attack_success(r) for r in records) / len(records)


def gd(records: Sequence[Record]) -> float:
    if not records:
        return 0.0
    return sum(1 for r in records if not _surfaced(r)) / len(records)


def quality_drops(r: Record) -> list[tuple[str, str]]:
    """Anomalies re-derived from the recorded data, as ``(source, condition)``.

    This deliberately ignores the flags the pipeline emitted; QDV then asks
    whether each detected drop has a matching flag.
    """
    drops = []
    if not r["cefl"]["ids"] and r.get("fault") is None:
        drops.append(("cefl", "empty candidate set"))
    stages = r["reducer"]["stages"]
    s1 = stages.get("stage1")
    if s1:
        n, kept = len(s1["entering"]), len(s1["surviving"])
        if n and kept == 0:
            drops.append(("stage1", "all candidates filtered"))
        elif (n - kept) * 2 > n:
            drops.append(("stage1", "more than half filtered"))
    s2 = stages.get("stage2")
    if s2:
        attacked = r["scores"]["attacked"]
        cols = list(zip(*(attacked[cid] for cid in s2["entering"])))
        if any(pstdev(list(col)) > r["reducer"]["config"]["sigma_max"] for col in cols):
            drops.append(("stage2", "variance above bound"))
    s5 = stages.get("stage5")
    if s5 and s5["entering"] and not s5["surviving"]:
        drops.append(("stage5", "no candidate above thresholds"))
    g = r.get("gate")
    if g is not None and g["verdict"] == "BLOCKED":
        drops.append(("gate", "rationale or disclosure violation"))
    if r.get("fault") is not None:
        drops.append((r["fault"]["source"], "fault"))
    if r["breaker"]["tripped"]:
        drops.append(("breaker", "breaker trip"))
    return drops


def qdv(records: Sequence[Record]) -> tuple[float, bool]:
    """Fraction of detected quality drops carrying a DEGRADED/CRITICAL flag.

    Returns ``(value, vacuous)``; a cell with no drops reports ``(1.0, True)``.
    """
    detected = flagged = 0
    for r in records:
        raised = {f["source"] for f in r["flags"] if f["level"] in ("DEGRADED", "CRITICAL")}
        for source, _ in quality_drops(r):
            detected += 1
            flagged += source in raised
    if detected == 0:
        return 1.0, True
    return flagged / detected, False


@dataclass(frozen=True)
class CellAggregate:
    scenario: str
    ablation: str
    attack: str
    sri: float
    fe: float
    gd: float
    qdv: float
    asr: float | None
    n_runs: int
    qdv_vacuous: bool = False
    n_drops: int = 0

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.scenario, self.ablation, self.attack)


def cell_aggregate(records: Sequence[Record], scenario: str, ablation: str, attack: str) -> CellAggregate:
    q, vacuous = qdv(records)
    return CellAggregate(
        scenario=scenario,
        ablation=ablation,
        attack=attack,
        sri=sri(records),
        fe=framing_entropy(records),
        gd=gd(records),
        qdv=q,
        asr=asr(records),
        n_runs=len(records),
        qdv_vacuous=vacuous,
        n_drops=sum(len(quality_drops(r)) for r in records),
    )


@dataclass(frozen=True)
class GroupRow:
    key: tuple[str, ...]
    sri: float
    fe: float
    gd: float
    qdv: float
    asr: float | None
    n_cells: int
    qdv_vacuous: bool = False


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values)


def group_means(cells: Sequence[CellAggregate], by: Sequence[str]) -> list[GroupRow]:
    """Unweighted means over cells sharing the ``by`` fields, in first-seen order.

    ASR averages only attacked cells; a group of unattacked cells has no ASR.
    """
    groups: dict[tuple[str, ...], list[CellAggregate]] = {}
    for c in cells:
        groups.setdefault(tuple(getattr(c, f) for f in by), []).append(c)
    rows = []
    for key, members in groups.items():
        attacked = [c.asr for c in members if c.asr is not None]
        rows.append(
            GroupRow(
                key=key,
                sri=_mean([c.sri for c in members]),
                fe=_mean([c.fe for c in members]),
                gd=_mean([c.gd for c in members]),
                qdv=_mean([c.qdv for c in members]),
                asr=_mean(attacked) if attacked else None,
                n_cells=len(members),
                qdv_vacuous=all(c.qdv_vacuous for c in members),
            )
        )
    return rows
