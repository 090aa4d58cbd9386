from __future__ import annotations

from dataclasses import replace

import pytest

from govsel import audit
from govsel.breaker import CircuitBreaker
from govsel.config import HarnessConfig, build_grid
from govsel.harness import (
    Faults,
    aggregate_logs,
    execute_run,
    pairing_key,
    run_cell_records,
    run_grid,
)
from govsel.metrics import cell_aggregate
from govsel.scenarios import scenario_tasks

CFG = HarnessConfig(runs_per_task=2)


def _cell(scenario="fraud_detection", ablation="B0", attack="A1"):
    return build_grid(CFG, scenario=scenario, ablation=ablation, attack=attack)[0]


def test_run_is_deterministic():
    cell = _cell()
    task = scenario_tasks(cell.scenario)[0]
    a = execute_run(cell, task, 0, 42)
    b = execute_run(cell, task, 0, 42)
    assert audit.dump_record(a) == audit.dump_record(b)
    assert execute_run(cell, task, 1, 42)["entropy"] != a["entropy"]


def test_pairing_shares_entropy_across_ablations():
    task = scenario_tasks("qbr_analysis")[2]
    a = execute_run(_cell("qbr_analysis", "B0", "NONE"), task, 3, 42)
    b = execute_run(_cell("qbr_analysis", "B2", "A3"), task, 3, 42)
    assert a["entropy"] == b["entropy"]
    assert a["scores"]["base"] == b["scores"]["base"]
    assert pairing_key(_cell("qbr_analysis", "B0", "NONE"), task, 3) == "qbr_analysis/" + task.id + "/3"


def test_b8_every_run_no_action():
    records, _ = run_cell_records(_cell(ablation="B8"), CFG)
    for r in records:
        assert r["outcome"]["kind"] == "NO_ACTION"
        assert any(f["level"] == "CRITICAL" and f["source"] == "cefl" for f in r["flags"])


def test_b11_breaker_blocks_clean_runs_until_reset():
    cell = _cell(ablation="B11", attack="NONE")
    task = scenario_tasks(cell.scenario)[0]
    breaker = CircuitBreaker.from_config(cell.ablation.breaker)
    faulty = execute_run(cell, task, 0, 42, breaker=breaker, faults=Faults(tamper_commitment=True))
    assert faulty["breaker"]["tripped"]
    halted = execute_run(cell, task, 1, 42, breaker=breaker, cell_seq=1)
    assert halted["outcome"] == {"kind": "BLOCKED", "detail": "circuit breaker open"}
    assert any(f["source"] == "breaker" and f["level"] == "CRITICAL" for f in halted["flags"])
    breaker.reset("reviewed")
    assert execute_run(cell, task, 1, 42, breaker=breaker, cell_seq=2)["outcome"]["kind"] == "SURFACED"


@pytest.mark.parametrize(
    "faults,source",
    [
        (Faults(tamper_commitment=True), "entropy"),
        (Faults(tamper_frozen=True), "integrity"),
        (Faults(scorer_drops_candidate=True), "integrity"),
    ],
)
def test_injected_faults_block_loudly(faults, source):
    cell = _cell(attack="NONE")
    r = execute_run(cell, scenario_tasks(cell.scenario)[0], 0, 42, faults=faults)
    assert r["outcome"]["kind"] == "BLOCKED"
    assert r["fault"]["source"] == source
    assert any(f["level"] == "CRITICAL" and f["source"] == source for f in r["flags"])
    assert audit.verify_line(audit.dump_record(r))[1] == []


def test_suppressed_flag_lowers_qdv():
    cell = _cell(ablation="B12", attack="A1")
    clean, _ = run_cell_records(cell, CFG)
    muted, _ = run_cell_records(cell, CFG, faults=Faults(suppress_flags=frozenset({"stage2"})))
    assert cell_aggregate(clean, *cell.key).qdv == 1.0
    assert cell_aggregate(muted, *cell.key).qdv < 1.0


def test_b4_leaks_and_b0_does_not():
    task = scenario_tasks("fraud_detection")[0]
    b4 = execute_run(_cell(ablation="B4", attack="A5"), task, 0, 42)
    b0 = execute_run(_cell(ablation="B0", attack="A5"), task, 0, 42)
    assert "entropy_leak" in [e["kind"] for e in b4["events"]]
    assert "entropy_leak" not in [e["kind"] for e in b0["events"]]
    assert b0["a5"]["played_phase"] == b0["a5"]["scheduled_phase"]


def test_logs_replay_to_same_aggregates(tmp_path):
    cfg = replace(CFG, runs_per_task=1)
    cells = build_grid(cfg, scenario="payments_monitoring", ablation="B0,B5,B9")
    results = run_grid(cfg, cells, tmp_path)
    assert [r.aggregate for r in results] == aggregate_logs(tmp_path)
    assert all(audit.verify_file(p) == [] for p in audit.iter_log_files(tmp_path))
