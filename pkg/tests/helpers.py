from __future__ import annotations

from govsel.domain import AgentCandidate, Argument, AxisScores, Rationale, ScoredCandidate


def make_candidate(
    cid: str,
    risk: float = 0.5,
    stability: float = 0.5,
    latency: float = 0.5,
    audit: float = 0.5,
    category: str = "alpha",
    compliance: str = "compliant",
    **extra: str,
) -> AgentCandidate:
    features = {"risk_safety": risk, "stability": stability, "latency": latency, "auditability": audit}
    disclosures = {
        "regulatory_compliance": compliance,
        "latency": repr(latency),
        "auditability_score": repr(audit),
        **extra,
    }
    return AgentCandidate(cid, features, disclosures, category)


DEFAULT_RATIONALE = Rationale((Argument("risk", "safe"),), (Argument("latency", "slow"),))


def make_scored(
    cid: str,
    scores: tuple[float, float, float],
    category: str = "alpha",
    rationale: Rationale = DEFAULT_RATIONALE,
    **kw,
) -> ScoredCandidate:
    return ScoredCandidate(make_candidate(cid, category=category, **kw), AxisScores(*scores), rationale)
