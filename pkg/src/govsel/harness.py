"""Grid executor: runs the governed pipeline per task and writes audit logs."""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from . import audit
from .breaker import CircuitBreaker
from .cefl import FrozenCandidateSet, FrozenDigestError, expand
from .config import ATTACK_IDS, Cell, HarnessConfig, build_grid
from .domain import (
    AgentCandidate,
    FlagLevel,
    OutcomeKind,
    QualityFlag,
    RunOutcome,
    ScoredCandidate,
    TaskSpec,
)
from .entropy import CommitmentMismatch, commit, derive_stream, reveal
from .gate import Verdict, gate
from .metrics import CellAggregate, cell_aggregate
from .reducer import MembershipError, reduce
from .scenarios import SCENARIOS, build_scenario_pool, scenario_tasks
from .scorer import (
    AttackKind,
    AttackSpec,
    ReducerExposure,
    apply_attack,
    base_score,
    choose_probe_phase,
    choose_target,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Faults:
    """Deliberate defects for mutation testing; all off in normal runs."""

    suppress_flags: frozenset[str] = frozenset()
    tamper_commitment: bool = False
    tamper_frozen: bool = False
    scorer_drops_candidate: bool = False


NO_FAULTS = Faults()


def derive_seed(master_seed: int, *parts: str) -> int:
    material = ":".join([str(master_seed), *parts]).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def run_id_for(cell: Cell, task: TaskSpec, run_index: int) -> str:
    return f"{cell.scenario}/{cell.ablation.id}/{cell.attack}/{task.id}/{run_index}"


def pairing_key(cell: Cell, task: TaskSpec, run_index: int) -> str:
    """Seed key shared by every ablation and attack at the same grid position."""
    return f"{cell.scenario}/{task.id}/{run_index}"


def _scores_map(scored: Sequence[ScoredCandidate]) -> dict[str, list[float]]:
    return {s.id: list(s.scores.as_tuple()) for s in scored}


@dataclass
class _RunState:
    flags: list[QualityFlag] = field(default_factory=list)
    faults: Faults = NO_FAULTS

    def add(self, flag: QualityFlag) -> None:
        if flag.level is FlagLevel.NOMINAL or flag.source in self.faults.suppress_flags:
            return
        self.flags.append(flag)


def execute_run(
    cell: Cell,
    task: TaskSpec,
    run_index: int,
    master_seed: int,
    *,
    pool: Sequence[AgentCandidate] | None = None,
    breaker: CircuitBreaker | None = None,
    cell_seq: int = 0,
    entropy_seed: int | None = None,
    faults: Faults = NO_FAULTS,
    pool_seed: int = 42,
) -> dict[str, Any]:
    """Run commit, CEFL, score, attack, reveal, reduce, gate and breaker for one task.

    Deterministic in ``(master_seed, cell, task, run_index)`` plus the
    breaker state.  Any stage exception becomes a BLOCKED outcome with a
    CRITICAL flag.
    """
    abl = cell.ablation
    if pool is None:
        pool = build_scenario_pool(cell.scenario, pool_seed)
    if breaker is None:
        breaker = CircuitBreaker.from_config(abl.breaker)
    run_id = run_id_for(cell, task, run_index)
    trail = audit.EventTrail()
    state = _RunState(faults=faults)
    kind = cell.attack_kind
    record: dict[str, Any] = {
        "schema": audit.SCHEMA_VERSION,
        "run_id": run_id,
        "scenario": cell.scenario,
        "task": task.id,
        "ablation": abl.id,
        "attack": cell.attack,
        "run_index": run_index,
        "cell_seq": cell_seq,
        "exposure": {"entropy": abl.entropy_exposed, "thresholds": abl.thresholds_exposed},
        "attack_spec": None,
        "target": None,
        "a5": None,
        "scores": {"base": {}, "attacked": {}},
        "rationales": {},
        "reducer": {"config": abl.reducer.to_dict(), "stages": {}},
        "surfaced": [],
        "gate": None,
        "fault": None,
    }

    pair = pairing_key(cell, task, run_index)
    env = commit(master_seed if entropy_seed is None else entropy_seed, run_id, stream_key=pair)
    if faults.tamper_commitment:
        env.commitment = bytes(b ^ 0xFF for b in env.commitment[:1]) + env.commitment[1:]
    trail.log("commit", commitment=env.commitment_hex)
    record["entropy"] = {"commitment": env.commitment_hex, "nonce": env.nonce.hex(), "entropy": None}

    outcome: RunOutcome
    try:
        frozen, cflag = expand(
            task,
            [] if abl.cefl.empty_pool else pool,
            env.governed_stream("cefl"),
            abl.cefl,
            abl.reducer.surfaced_size,
            boundary=abl.boundary,
        )
        state.add(cflag)
        record["cefl"] = {
            "ids": frozen.ids,
            "frozen_digest": frozen.frozen_digest,
            "pool_size": 0 if abl.cefl.empty_pool else len(pool),
        }
        trail.log("cefl", frozen_digest=frozen.frozen_digest, size=len(frozen))
        if faults.tamper_frozen and len(frozen):
            frozen = FrozenCandidateSet(frozen.candidates[1:], frozen.frozen_digest, frozen.task_id)

        exposure = ReducerExposure(
            thresholds=abl.reducer.per_axis_threshold if abl.thresholds_exposed else None,
            entropy=env.leak() if abl.entropy_exposed else None,
            assumed_config=abl.reducer,
        )
        if exposure.entropy is not None:
            trail.log("entropy_leak", recipient="scorer")

        scored = base_score(frozen, task, derive_seed(master_seed, pair, "scorer"), abl.noise_scale) if len(frozen) else []
        if kind is not AttackKind.NONE:
            scheduled = "high" if cell_seq % 2 == 0 else "low"
            spec = AttackSpec(kind, choose_target(scored), abl.alpha, abl.epsilon, abl.skew, scheduled)
            if kind is AttackKind.A5:
                played = choose_probe_phase(scored, spec, exposure)
                record["a5"] = {"scheduled_phase": scheduled, "played_phase": played}
                spec = replace(spec, phase=played)
            attacked = apply_attack(scored, spec, exposure)
            record["attack_spec"] = spec.to_dict()
            record["target"] = spec.target_id
        else:
            attacked = list(scored)
        if faults.scorer_drops_candidate and attacked:
            attacked = attacked[1:]
        record["scores"] = {"base": _scores_map(scored), "attacked": _scores_map(attacked)}
        record["rationales"] = {s.id: s.rationale.to_dict() for s in attacked}
        trail.log("score", n_scored=len(attacked), target=record["target"])

        verified = reveal(env, trail)
        record["entropy"]["entropy"] = verified.hex()
        trail.log("reveal", entropy=verified.hex(), nonce=env.nonce.hex())

        reduction = reduce(frozen, attacked, abl.reducer, derive_stream(verified, "lottery"))
        for st in reduction.surfaced.stage_trace:
            stage = st.to_dict()
            if st.stage in faults.suppress_flags:
                stage["flag"], stage["reason"] = FlagLevel.NOMINAL.value, ""
            record["reducer"]["stages"][st.stage] = stage
        for f in reduction.flags:
            state.add(f)
        record["surfaced"] = reduction.surfaced.ids
        trail.log("reduce", surfaced=reduction.surfaced.ids)

        if reduction.no_action:
            trail.log("gate", skipped=True)
            outcome = RunOutcome(OutcomeKind.NO_ACTION, "no eligible candidate after reduction")
        else:
            presented = gate(reduction.surfaced, abl.gate, derive_stream(verified, "ordering"))
            record["gate"] = {
                "verdict": presented.gate_verdict.value,
                "violations": list(presented.violations),
                "permutation": list(presented.order_permutation),
                "presented": presented.ids,
                "validation_skipped": presented.validation_skipped,
                "hint_requests": [dict(h) for h in presented.hint_requests],
                "hint_consulted": False,
            }
            trail.log("gate", verdict=presented.gate_verdict.value)
            if presented.gate_verdict is Verdict.BLOCKED:
                state.add(presented.flag)
                outcome = RunOutcome(OutcomeKind.BLOCKED, "presentation gate violation")
            else:
                outcome = RunOutcome(OutcomeKind.SURFACED, f"{len(presented.entries)} surfaced")
    except CommitmentMismatch as exc:
        outcome = _fault(record, trail, state, "entropy", exc)
    except (FrozenDigestError, MembershipError) as exc:
        outcome = _fault(record, trail, state, "integrity", exc)
    except Exception as exc:  # fail loud: never let a stage error pass silently
        log.exception("internal fault in run %s", run_id)
        outcome = _fault(record, trail, state, "internal", exc)

    blocked_before = breaker.should_block()
    tripped = breaker.record_run_flags(state.flags)
    if blocked_before and outcome.kind is OutcomeKind.SURFACED:
        outcome = RunOutcome(OutcomeKind.BLOCKED, "circuit breaker open")
        state.add(QualityFlag(FlagLevel.CRITICAL, "breaker", "output halted pending review"))
    if tripped:
        state.add(QualityFlag(FlagLevel.CRITICAL, "breaker", "breaker tripped"))
    snap = breaker.snapshot()
    record["breaker"] = {**snap, "blocked_before": blocked_before, "tripped": tripped}
    trail.log("breaker", status=snap["status"], tripped=tripped)
    trail.log("outcome", outcome=outcome.kind.value)

    record["flags"] = [f.to_dict() for f in state.flags]
    record["outcome"] = outcome.to_dict()
    record["events"] = trail.events
    record.setdefault("cefl", {"ids": [], "frozen_digest": "", "pool_size": 0})
    return audit.seal(record)


def _fault(record: dict[str, Any], trail: audit.EventTrail, state: _RunState, source: str, exc: Exception) -> RunOutcome:
    record["fault"] = {"source": source, "error": f"{type(exc).__name__}: {exc}"}
    state.add(QualityFlag(FlagLevel.CRITICAL, source, str(exc)))
    trail.log("fault", source=source)
    return RunOutcome(OutcomeKind.BLOCKED, f"{source} fault")


def run_cell_records(
    cell: Cell,
    config: HarnessConfig,
    *,
    faults: Faults = NO_FAULTS,
    tasks: Sequence[TaskSpec] | None = None,
) -> tuple[list[dict[str, Any]], CircuitBreaker]:
    """All runs of one cell, sequentially, sharing one breaker."""
    pool = build_scenario_pool(cell.scenario, config.pool_seed)
    breaker = CircuitBreaker.from_config(cell.ablation.breaker)
    records = []
    seq = 0
    for task in tasks if tasks is not None else scenario_tasks(cell.scenario):
        for run_index in range(config.runs_per_task):
            records.append(
                execute_run(
                    cell,
                    task,
                    run_index,
                    config.master_seed,
                    pool=pool,
                    breaker=breaker,
                    cell_seq=seq,
                    faults=faults,
                )
            )
            seq += 1
    return records, breaker


@dataclass(frozen=True)
class CellResult:
    key: tuple[str, str, str]
    aggregate: CellAggregate
    breaker: dict[str, Any]
    n_runs: int
    log_file: str | None
    internal_faults: int = 0


def _run_cell_job(args: tuple[Cell, HarnessConfig, str | None, Faults]) -> CellResult:
    cell, config, log_dir, faults = args
    records, breaker = run_cell_records(cell, config, faults=faults)
    path = None
    if log_dir is not None:
        path = Path(log_dir) / cell.log_name
        audit.write_jsonl(path, records)
    agg = cell_aggregate(records, cell.scenario, cell.ablation.id, cell.attack)
    internal = sum(1 for r in records if r["fault"] is not None and r["fault"]["source"] == "internal")
    return CellResult(cell.key, agg, breaker.snapshot(), len(records), path.name if path else None, internal)


def run_grid(
    config: HarnessConfig,
    cells: Iterable[Cell] | None = None,
    log_dir: str | os.PathLike[str] | None = None,
    *,
    jobs: int = 1,
    faults: Faults = NO_FAULTS,
    progress: Callable[[CellResult], None] | None = None,
) -> list[CellResult]:
    """Execute every cell, one JSONL file per cell; results come back in grid order."""
    cells = list(cells) if cells is not None else build_grid(config)
    jobs_args = [(c, config, str(log_dir) if log_dir is not None else None, faults) for c in cells]
    results: list[CellResult] = []
    if jobs <= 1 or len(cells) == 1:
        for a in jobs_args:
            results.append(_run_cell_job(a))
            if progress:
                progress(results[-1])
        return results
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        for res in ex.map(_run_cell_job, jobs_args, chunksize=4):
            results.append(res)
            if progress:
                progress(res)
    return results


def write_manifest(
    out_dir: Path, config: HarnessConfig, results: Sequence[CellResult], filters: dict[str, str | None]
) -> dict[str, Any]:
    manifest = {
        "schema": audit.SCHEMA_VERSION,
        "master_seed": config.master_seed,
        "config_digest": config.digest(),
        "config": config.to_dict(),
        "filters": filters,
        "grid": {
            "scenarios": sorted({r.key[0] for r in results}),
            "ablations": sorted({r.key[1] for r in results}, key=lambda b: int(b[1:])),
            "attacks": sorted({r.key[2] for r in results}),
            "cells": len(results),
            "runs": sum(r.n_runs for r in results),
            "runs_per_task": config.runs_per_task,
        },
        "logs": [r.log_file for r in results],
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    breakers = {"/".join(r.key): r.breaker for r in results}
    (out_dir / "breaker_state.json").write_text(json.dumps(breakers, indent=2, sort_keys=True) + "\n")
    return manifest


def load_log_dir(log_dir: str | os.PathLike[str]) -> dict[tuple[str, str, str], list[dict[str, Any]]]:
    """Records grouped by cell; raises :class:`~govsel.audit.AuditLogError` on any bad line."""
    cells: dict[tuple[str, str, str], list[dict[str, Any]]] = {}
    for path in audit.iter_log_files(Path(log_dir)):
        for rec in audit.read_jsonl(path):
            cells.setdefault((rec["scenario"], rec["ablation"], rec["attack"]), []).append(rec)
    return cells


def aggregate_logs(log_dir: str | os.PathLike[str]) -> list[CellAggregate]:
    return [
        cell_aggregate(recs, *key)
        for key, recs in sorted(load_log_dir(log_dir).items(), key=lambda kv: cell_sort_key(kv[0]))
    ]


def cell_sort_key(key: tuple[str, str, str]) -> tuple[Any, ...]:
    s, b, a = key
    return (SCENARIOS.index(s), int(b[1:]), ATTACK_IDS.index(a))
