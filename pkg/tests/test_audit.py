from __future__ import annotations

import json

import pytest

from govsel import audit
from govsel.config import HarnessConfig, build_grid
from govsel.harness import run_cell_records


@pytest.fixture(scope="module")
def records():
    cfg = HarnessConfig(runs_per_task=1)
    cell = build_grid(cfg, scenario="fraud_detection", ablation="B0", attack="A1")[0]
    recs, _ = run_cell_records(cell, cfg)
    return recs


def test_clean_records_verify(records):
    for r in records:
        run_id, problems = audit.verify_line(audit.dump_record(r))
        assert problems == [] and run_id == r["run_id"]


def test_required_event_order(records):
    kinds = [e["kind"] for e in records[0]["events"]]
    idx = [kinds.index(k) for k in audit.REQUIRED_ORDER]
    assert idx == sorted(idx)
    assert kinds[-2:] == list(audit.TERMINAL_EVENTS)


def test_reordered_events_rejected(records):
    r = json.loads(audit.dump_record(records[0]))
    ev = r["events"]
    i, j = [e["kind"] for e in ev].index("score"), [e["kind"] for e in ev].index("reveal")
    ev[i]["kind"], ev[j]["kind"] = ev[j]["kind"], ev[i]["kind"]
    audit.seal(r)
    _, problems = audit.verify_line(audit.dump_record(r))
    assert any("ordering violation" in p for p in problems)


def test_digest_tamper_detected(records):
    r = json.loads(audit.dump_record(records[0]))
    r["surfaced"] = list(reversed(r["surfaced"])) + ["extra"]
    _, problems = audit.verify_line(audit.dump_record(r))
    assert "record digest mismatch" in problems


def test_resealed_entropy_tamper_detected(records):
    r = json.loads(audit.dump_record(records[0]))
    r["entropy"]["entropy"] = "00" * 32
    audit.seal(r)
    _, problems = audit.verify_line(audit.dump_record(r))
    assert "revealed entropy does not match commitment" in problems


def test_resealed_stage_chain_tamper_detected(records):
    r = json.loads(audit.dump_record(records[0]))
    r["reducer"]["stages"]["stage3"]["entering"].append("ghost")
    audit.seal(r)
    _, problems = audit.verify_line(audit.dump_record(r))
    assert any("stage3 entering" in p for p in problems)


def test_non_canonical_line_rejected(records):
    line = json.dumps(records[0], indent=1)
    _, problems = audit.verify_line(line)
    assert "line is not in canonical form" in problems


def test_corrupt_line_and_file(tmp_path, records):
    p = tmp_path / "x.jsonl"
    audit.write_jsonl(p, records[:2])
    assert audit.verify_file(p) == []
    assert len(audit.read_jsonl(p)) == 2
    data = bytearray(p.read_bytes())
    data[10] ^= 0x01
    p.write_bytes(bytes(data))
    failures = audit.verify_file(p)
    assert failures and failures[0][0] == 1
    with pytest.raises(audit.AuditLogError):
        audit.read_jsonl(p)


def test_missing_trailing_newline(tmp_path, records):
    p = tmp_path / "x.jsonl"
    p.write_text(audit.dump_record(records[0]))
    assert any("newline" in pr for _, _, probs in audit.verify_file(p) for pr in probs)
