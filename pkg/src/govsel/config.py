"""Ablation definitions, harness configuration and grid construction."""

from __future__ import annotations

import fnmatch
import hashlib
import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .breaker import BreakerConfig
from .cefl import CeflConfig
from .domain import canonical_json
from .gate import GateConfig
from .reducer import HardConstraint, ReducerConfig
from .scenarios import SCENARIOS
from .scorer import AttackKind

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

ABLATION_IDS = tuple(f"B{i}" for i in range(13))
ATTACK_IDS = ("A1", "A2", "A3", "A4", "A5", "NONE")
BOUNDARY_ABLATIONS = frozenset({"B8"})
CONFIG_ENV = "GOVSEL_CONFIG"

ABLATION_LABELS = {
    "B0": "baseline",
    "B1": "no variance clamp",
    "B2": "no diversity",
    "B3": "no exploration",
    "B4": "entropy exposed",
    "B5": "gate disabled",
    "B6": "breaker disabled",
    "B7": "constraint exposure",
    "B8": "empty CEFL pool",
    "B9": "strict risk constraint",
    "B10": "extra disclosure",
    "B11": "aggressive breaker",
    "B12": "compound stress",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class AblationConfig:
    id: str = "B0"
    cefl: CeflConfig = field(default_factory=CeflConfig)
    noise_scale: float = 0.05
    alpha: float = 1.5
    epsilon: float = 0.02
    skew: int = 3
    reducer: ReducerConfig = field(
        default_factory=lambda: ReducerConfig(
            hard_constraints=(HardConstraint(disclosure="regulatory_compliance"),)
        )
    )
    gate: GateConfig = field(default_factory=GateConfig)
    breaker: BreakerConfig = field(default_factory=BreakerConfig)
    entropy_exposed: bool = False
    thresholds_exposed: bool = False

    @property
    def label(self) -> str:
        return ABLATION_LABELS.get(self.id, self.id)

    @property
    def boundary(self) -> bool:
        return self.id in BOUNDARY_ABLATIONS

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "cefl": {
                "overshoot_factor": self.cefl.overshoot_factor,
                "jitter_scale": self.cefl.jitter_scale,
                "empty_pool": self.cefl.empty_pool,
            },
            "noise_scale": self.noise_scale,
            "alpha": self.alpha,
            "epsilon": self.epsilon,
            "skew": self.skew,
            "reducer": self.reducer.to_dict(),
            "gate": self.gate.to_dict(),
            "breaker": {"threshold": self.breaker.threshold, "window": self.breaker.window},
            "entropy_exposed": self.entropy_exposed,
            "thresholds_exposed": self.thresholds_exposed,
        }


def build_ablations(base: AblationConfig) -> dict[str, AblationConfig]:
    """B0..B12, each derived from ``base`` by changing only its named knobs."""
    r, g = base.reducer, base.gate
    return {
        "B0": replace(base, id="B0"),
        "B1": replace(base, id="B1", reducer=replace(r, sigma_max=1.0)),
        "B2": replace(base, id="B2", reducer=replace(r, diversity_buckets=1)),
        "B3": replace(base, id="B3", reducer=replace(r, k=0)),
        "B4": replace(base, id="B4", entropy_exposed=True),
        "B5": replace(base, id="B5", gate=replace(g, skip_validation=True)),
        "B6": replace(base, id="B6", breaker=replace(base.breaker, threshold=999)),
        "B7": replace(base, id="B7", thresholds_exposed=True),
        "B8": replace(base, id="B8", cefl=replace(base.cefl, empty_pool=True)),
        "B9": replace(
            base,
            id="B9",
            reducer=replace(
                r,
                hard_constraints=r.hard_constraints
                + (HardConstraint(axis="risk_safety", op=">=", bound=0.95),),
            ),
        ),
        "B10": replace(
            base,
            id="B10",
            reducer=replace(
                r, hard_constraints=r.hard_constraints + (HardConstraint(disclosure="model_version"),)
            ),
            gate=replace(g, required_disclosures=g.required_disclosures + ("model_version",)),
        ),
        "B11": replace(base, id="B11", breaker=BreakerConfig(threshold=1, window=2)),
        "B12": replace(
            base,
            id="B12",
            cefl=replace(base.cefl, overshoot_factor=1.5),
            noise_scale=0.10,
            reducer=replace(r, per_axis_threshold=0.4, sigma_max=0.12),
            gate=replace(g, tolerance=0.0),
            alpha=2.0,
        ),
    }


@dataclass(frozen=True)
class HarnessConfig:
    master_seed: int = 42
    pool_seed: int = 42
    runs_per_task: int = 5
    scenarios: tuple[str, ...] = SCENARIOS
    ablations: tuple[str, ...] = ABLATION_IDS
    attacks: tuple[str, ...] = ATTACK_IDS
    baseline: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self) -> None:
        for name in ("scenarios", "ablations", "attacks"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for s in self.scenarios:
            if s not in SCENARIOS:
                raise ConfigError(f"unknown scenario {s!r}")
        for a in self.ablations:
            if a not in ABLATION_IDS:
                raise ConfigError(f"unknown ablation {a!r}")
        for a in self.attacks:
            if a not in ATTACK_IDS:
                raise ConfigError(f"unknown attack {a!r}")
        if self.runs_per_task < 1:
            raise ConfigError("runs_per_task must be >= 1")

    def ablation(self, ablation_id: str) -> AblationConfig:
        return build_ablations(self.baseline)[ablation_id]

    def to_dict(self) -> dict[str, Any]:
        return {
            "master_seed": self.master_seed,
            "pool_seed": self.pool_seed,
            "runs_per_task": self.runs_per_task,
            "scenarios": list(self.scenarios),
            "ablations": list(self.ablations),
            "attacks": list(self.attacks),
            "baseline": self.baseline.to_dict(),
        }

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()


def _build(cls: type, data: Mapping[str, Any], where: str) -> Any:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    return cls(**data)


def baseline_from_dict(data: Mapping[str, Any]) -> AblationConfig:
    data = dict(data)
    kwargs: dict[str, Any] = {}
    if "cefl" in data:
        kwargs["cefl"] = _build(CeflConfig, data.pop("cefl"), "baseline.cefl")
    if "reducer" in data:
        red = dict(data.pop("reducer"))
        if "hard_constraints" in red:
            red["hard_constraints"] = tuple(HardConstraint.from_dict(c) for c in red["hard_constraints"])
        kwargs["reducer"] = _build(ReducerConfig, red, "baseline.reducer")
    if "gate" in data:
        kwargs["gate"] = _build(GateConfig, data.pop("gate"), "baseline.gate")
    if "breaker" in data:
        kwargs["breaker"] = _build(BreakerConfig, data.pop("breaker"), "baseline.breaker")
    kwargs.update(data)
    return _build(AblationConfig, kwargs, "baseline")


def config_from_dict(data: Mapping[str, Any]) -> HarnessConfig:
    data = dict(data)
    try:
        if "baseline" in data:
            data["baseline"] = baseline_from_dict(data["baseline"])
        return _build(HarnessConfig, data, "config")
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike[str] | None = None) -> HarnessConfig:
    """Read a JSON or TOML config; ``None`` falls back to ``$GOVSEL_CONFIG`` then defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV)
        if not path:
            return HarnessConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: {exc.strerror}") from exc
    try:
        if p.suffix == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno}: {exc.msg}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{p}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: top level must be an object")
    return config_from_dict(data)


@dataclass(frozen=True)
class Cell:
    scenario: str
    ablation: AblationConfig
    attack: str

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.scenario, self.ablation.id, self.attack)

    @property
    def attack_kind(self) -> AttackKind:
        return AttackKind(self.attack)

    @property
    def log_name(self) -> str:
        return f"{self.scenario}__{self.ablation.id}__{self.attack}.jsonl"


def _match(values: Sequence[str], patterns: str | None, what: str) -> list[str]:
    if not patterns:
        return list(values)
    globs = [p.strip() for p in patterns.split(",") if p.strip()]
    for g in globs:
        if not any(ch in g for ch in "*?[") and g not in values:
            raise ConfigError(f"unknown {what} {g!r}")
    return [v for v in values if any(fnmatch.fnmatchcase(v, g) for g in globs)]


def build_grid(
    config: HarnessConfig,
    scenario: str | None = None,
    ablation: str | None = None,
    attack: str | None = None,
) -> list[Cell]:
    """Cells of the (scenario, ablation, attack) grid after glob filtering."""
    ablations = build_ablations(config.baseline)
    cells = [
        Cell(s, ablations[b], a)
        for s in _match(config.scenarios, scenario, "scenario")
        for b in _match(config.ablations, ablation, "ablation")
        for a in _match(config.attacks, attack, "attack")
    ]
    if not cells:
        raise ConfigError("filters select no cells")
    return cells
