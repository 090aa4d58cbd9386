"""Run-indexed circuit breaker over quality flags."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .domain import FlagLevel, QualityFlag, worst_level


class BreakerStatus(str, Enum):
    CLOSED = "CLOSED"
    OPEN = "OPEN"


@dataclass(frozen=True)
class BreakerConfig:
    threshold: int = 2
    window: int = 7

    def __post_init__(self) -> None:
        if self.threshold < 1 or self.window < 1:
            raise ValueError("threshold and window must be >= 1")


@dataclass
class CircuitBreaker:
    """Trips when CRITICAL runs in the last ``window`` runs reach ``threshold``.

    Only CRITICAL counts toward tripping. Once open it stays open until
    :meth:`reset`.
    """

    threshold: int = 2
    window: int = 7
    status: BreakerStatus = BreakerStatus.CLOSED
    ring: deque[FlagLevel] = field(default_factory=deque)

    @classmethod
    def from_config(cls, cfg: BreakerConfig) -> CircuitBreaker:
        return cls(cfg.threshold, cfg.window)

    def record_run_flags(self, flags: Iterable[QualityFlag]) -> bool:
        """Append the run's worst flag; return True if this run tripped the breaker."""
        self.ring.append(worst_level(flags))
        while len(self.ring) > self.window:
            self.ring.popleft()
        if self.status is BreakerStatus.OPEN:
            return False
        if sum(1 for lvl in self.ring if lvl is FlagLevel.CRITICAL) >= self.threshold:
            self.status = BreakerStatus.OPEN
            return True
        return False

    def should_block(self) -> bool:
        return self.status is BreakerStatus.OPEN

    def reset(self, note: str = "") -> dict[str, Any]:
        """Close the breaker after operator review and return the audit event.

        Resetting a closed breaker changes nothing; the event says so.
        """
        event = {
            "kind": "breaker_reset",
            "note": note,
            "status_before": self.status.value,
            "ring": self.snapshot()["ring"],
            "changed": self.status is BreakerStatus.OPEN,
        }
        if self.status is BreakerStatus.OPEN:
            self.status = BreakerStatus.CLOSED
            self.ring.clear()
        return event

    def snapshot(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "threshold": self.threshold,
            "window": self.window,
            "ring": [lvl.value for lvl in self.ring],
        }

    @classmethod
    def restore(cls, snap: dict[str, Any]) -> CircuitBreaker:
        return cls(
            int(snap["threshold"]),
            int(snap["window"]),
            BreakerStatus(snap["status"]),
            deque(FlagLevel(v) for v in snap["ring"]),
        )
