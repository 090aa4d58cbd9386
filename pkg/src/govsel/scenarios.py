"""Predefined agent pools and task instances for the three financial scenarios."""

from __future__ import annotations

import hashlib
import random

from .domain import FEATURE_AXES, AgentCandidate, TaskSpec, ValidationError, validate_pool

SCENARIOS = ("fraud_detection", "payments_monitoring", "qbr_analysis")
POOL_SIZE = 10
# keeps every pool below the strict-risk ablation bound of 0.95
MAX_RISK_SAFETY = 0.90

_CATEGORIES = {
    "fraud_detection": ("rules_engine", "ml_classifier", "graph_analytics"),
    "payments_monitoring": ("stream_monitor", "anomaly_model", "sla_tracker"),
    "qbr_analysis": ("report_writer", "forecaster", "variance_analyst"),
}

_PREFIX = {"fraud_detection": "fd", "payments_monitoring": "pm", "qbr_analysis": "qbr"}

# (task id, description, requirement vector over FEATURE_AXES)
_TASKS: dict[str, list[tuple[str, str, tuple[float, float, float, float]]]] = {
    "fraud_detection": [
        ("fd-t1", "card-not-present anomaly detection", (0.9, 0.6, 0.8, 0.5)),
        ("fd-t2", "account takeover compliance review", (0.8, 0.7, 0.3, 0.9)),
        ("fd-t3", "merchant risk summarization", (0.7, 0.8, 0.4, 0.7)),
        ("fd-t4", "mule network triage", (0.9, 0.5, 0.6, 0.6)),
        ("fd-t5", "chargeback pattern audit", (0.6, 0.6, 0.3, 1.0)),
    ],
    "payments_monitoring": [
        ("pm-t1", "settlement latency anomaly detection", (0.6, 0.8, 1.0, 0.4)),
        ("pm-t2", "gateway outage root-cause review", (0.7, 0.9, 0.7, 0.6)),
        ("pm-t3", "scheme compliance review", (0.8, 0.6, 0.3, 0.9)),
        ("pm-t4", "throughput risk summarization", (0.5, 0.9, 0.8, 0.5)),
        ("pm-t5", "reconciliation break triage", (0.7, 0.7, 0.5, 0.8)),
    ],
    "qbr_analysis": [
        ("qbr-t1", "revenue variance summarization", (0.5, 0.7, 0.3, 0.9)),
        ("qbr-t2", "credit loss trend review", (0.9, 0.6, 0.2, 0.8)),
        ("qbr-t3", "cost anomaly detection", (0.6, 0.8, 0.5, 0.6)),
        ("qbr-t4", "regulatory capital commentary", (0.8, 0.5, 0.2, 1.0)),
        ("qbr-t5", "forecast accuracy review", (0.6, 0.9, 0.4, 0.7)),
    ],
}

_FEATURE_RANGES = {
    "risk_safety": (0.20, MAX_RISK_SAFETY),
    "stability": (0.20, 0.92),
    "latency": (0.15, 0.95),
    "auditability": (0.20, 0.95),
}


def _check_scenario(scenario_id: str) -> None:
    if scenario_id not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario_id!r}")


def build_scenario_pool(scenario_id: str, seed: int) -> list[AgentCandidate]:
    """Deterministic pool of ten agents for ``scenario_id``.

    Every agent discloses regulatory compliance, latency and auditability
    score; none discloses a model version.
    """
    _check_scenario(scenario_id)
    digest = hashlib.sha256(f"pool:{scenario_id}:{seed}".encode()).digest()
    rng = random.Random(int.from_bytes(digest, "big"))
    cats = _CATEGORIES[scenario_id]
    assignment = [cats[0]] * 4 + [cats[1]] * 3 + [cats[2]] * 3
    rng.shuffle(assignment)
    pool = []
    for i, category in enumerate(assignment):
        features = {a: round(rng.uniform(*_FEATURE_RANGES[a]), 3) for a in FEATURE_AXES}
        compliance = "partial" if rng.random() < 0.3 else "compliant"
        pool.append(
            AgentCandidate(
                id=f"{_PREFIX[scenario_id]}-agent-{i:02d}",
                features=features,
                disclosures={
                    "regulatory_compliance": compliance,
                    "latency": repr(features["latency"]),
                    "auditability_score": repr(features["auditability"]),
                },
                category=category,
            )
        )
    validate_pool(pool)
    return pool


def scenario_tasks(scenario_id: str) -> list[TaskSpec]:
    _check_scenario(scenario_id)
    return [
        TaskSpec(
            id=tid,
            scenario=scenario_id,
            requirement_vector=dict(zip(FEATURE_AXES, vec)),
            description=desc,
        )
        for tid, desc, vec in _TASKS[scenario_id]
    ]


def task_by_id(task_id: str) -> TaskSpec:
    for scenario in SCENARIOS:
        for task in scenario_tasks(scenario):
            if task.id == task_id:
                return task
    raise ValidationError(f"unknown task {task_id!r}")
