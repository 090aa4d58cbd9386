from __future__ import annotations

import math

import pytest

from govsel.domain import (
    AgentCandidate,
    AxisScores,
    FlagLevel,
    QualityFlag,
    TaskSpec,
    ValidationError,
    canonical_json,
    dump_pool,
    load_pool,
    validate_candidate,
    validate_pool,
    worst_level,
)
from govsel.scenarios import MAX_RISK_SAFETY, POOL_SIZE, SCENARIOS, build_scenario_pool, scenario_tasks, task_by_id

from helpers import make_candidate


def test_interior_candidate_validates():
    validate_candidate(make_candidate("c1"))


def test_out_of_range_feature_names_axis():
    with pytest.raises(ValidationError, match="risk_safety out of range"):
        validate_candidate(make_candidate("c1", risk=1.2))


def test_nan_feature_rejected():
    with pytest.raises(ValidationError, match="stability out of range"):
        validate_candidate(make_candidate("c1", stability=math.nan))


def test_missing_axis():
    c = AgentCandidate("c1", {"risk_safety": 0.5, "stability": 0.5, "auditability": 0.5})
    with pytest.raises(ValidationError, match="missing axis 'latency'"):
        validate_candidate(c)


def test_unknown_axis():
    feats = {"risk_safety": 0.5, "stability": 0.5, "latency": 0.5, "auditability": 0.5, "speed": 0.1}
    with pytest.raises(ValidationError, match="unknown axis"):
        validate_candidate(AgentCandidate("c1", feats))


def test_duplicate_disclosure_key_rejected():
    feats = {"risk_safety": 0.5, "stability": 0.5, "latency": 0.5, "auditability": 0.5}
    with pytest.raises(ValidationError, match="duplicate"):
        AgentCandidate("c1", feats, [("latency", "0.5"), ("latency", "0.6")])


def test_duplicate_disclosure_key_in_json_rejected():
    text = (
        '[{"id":"c1","category":"a","features":{"risk_safety":0.5,"stability":0.5,'
        '"latency":0.5,"auditability":0.5},"disclosures":{"latency":"0.5","latency":"0.4"}}]'
    )
    with pytest.raises(ValidationError, match="duplicate key 'latency'"):
        load_pool(text)


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError, match="duplicate candidate id"):
        validate_pool([make_candidate("c1"), make_candidate("c1")])


def test_candidate_is_immutable():
    c = make_candidate("c1")
    with pytest.raises(TypeError):
        c.features["risk_safety"] = 0.9  # type: ignore[index]


def test_pool_round_trip():
    pool = build_scenario_pool("fraud_detection", 42)
    assert load_pool(dump_pool(pool)) == pool


def test_axis_scores_bounds_and_clip():
    with pytest.raises(ValidationError):
        AxisScores(1.1, 0.5, 0.5)
    assert AxisScores.from_seq([1.3, -0.2, 0.4]).as_tuple() == (1.0, 0.0, 0.4)
    assert AxisScores(0.3, 0.6, 0.9).mean == pytest.approx(0.6)


def test_worst_level():
    assert worst_level([]) is FlagLevel.NOMINAL
    flags = [QualityFlag(FlagLevel.DEGRADED, "a"), QualityFlag(FlagLevel.CRITICAL, "b")]
    assert worst_level(flags) is FlagLevel.CRITICAL


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'


def test_task_requirement_validation():
    with pytest.raises(ValidationError):
        TaskSpec("t", "fraud_detection", {"risk_safety": 1.0})


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_scenario_pool_contract(scenario):
    pool = build_scenario_pool(scenario, 42)
    assert pool == build_scenario_pool(scenario, 42)
    assert len(pool) == POOL_SIZE
    assert len({c.category for c in pool}) == 3
    for c in pool:
        assert {"regulatory_compliance", "latency", "auditability_score"} <= set(c.disclosures)
        assert "model_version" not in c.disclosures
    assert max(c.features["risk_safety"] for c in pool) <= MAX_RISK_SAFETY < 0.95


def test_pools_differ_by_seed():
    assert build_scenario_pool("qbr_analysis", 1) != build_scenario_pool("qbr_analysis", 2)


def test_unknown_scenario():
    with pytest.raises(ValueError, match="unknown scenario"):
        build_scenario_pool("crypto", 42)


def test_fifteen_tasks():
    tasks = [t for s in SCENARIOS for t in scenario_tasks(s)]
    assert len(tasks) == 15 and len({t.id for t in tasks}) == 15
    assert task_by_id("pm-t3").scenario == "payments_monitoring"
