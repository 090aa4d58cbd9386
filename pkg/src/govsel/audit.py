"""JSONL audit records: event trails, sealing, reading and verification.

Each run is one line of canonical JSON (sorted keys, no whitespace, ASCII)
carrying a ``record_digest`` over everything else.  Verification insists the
line is byte-identical to its canonical re-serialization, so any single-byte
edit is caught either there or by the digest.
"""

from __future__ import annotations

import hashlib
import json
from collections.abc import Iterator
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .domain import canonical_json

SCHEMA_VERSION = "govsel/1"
# events every complete run must log, in this relative order
REQUIRED_ORDER = ("commit", "score", "reveal", "reduce", "gate")
TERMINAL_EVENTS = ("breaker", "outcome")


class AuditLogError(Exception):
    """A log line is corrupt or fails its digest."""


class EventTrail:
    """Sequence-numbered events for one run."""

    def __init__(self) -> None:
        self.events: list[dict[str, Any]] = []

    def log(self, kind: str, **data: Any) -> dict[str, Any]:
        event = {"seq": len(self.events), "kind": kind, **data}
        self.events.append(event)
        return event

    def has(self, kind: str) -> bool:
        return any(e["kind"] == kind for e in self.events)

    def kinds(self) -> list[str]:
        return [e["kind"] for e in self.events]


def record_digest(record: dict[str, Any]) -> str:
    body = {k: v for k, v in record.items() if k != "record_digest"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def seal(record: dict[str, Any]) -> dict[str, Any]:
    record["record_digest"] = record_digest(record)
    return record


def dump_record(record: dict[str, Any]) -> str:
    return canonical_json(record)


def write_jsonl(path: Path, records: list[dict[str, Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dump_record(r))
            fh.write("\n")


def read_jsonl(path: Path) -> list[dict[str, Any]]:
    """Load every record, failing hard on the first unreadable or unsealed line."""
    records = []
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip(b"\n")
            try:
                record = json.loads(line.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise AuditLogError(f"{path}:{lineno}: corrupt line ({exc})") from exc
            if not isinstance(record, dict) or record.get("record_digest") != record_digest(record):
                raise AuditLogError(f"{path}:{lineno}: record digest mismatch")
            records.append(record)
    return records


def iter_log_files(log_dir: Path) -> Iterator[Path]:
    yield from sorted(Path(log_dir).glob("*.jsonl"))


@lru_cache(maxsize=1)
def record_schema() -> dict[str, Any]:
    text = resources.files("govsel").joinpath("record_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@lru_cache(maxsize=1)
def _validator() -> jsonschema.Draft202012Validator:
    return jsonschema.Draft202012Validator(record_schema())


def check_event_order(events: list[dict[str, Any]]) -> list[str]:
    problems = []
    for i, e in enumerate(events):
        if e.get("seq") != i:
            problems.append(f"event {i} has seq {e.get('seq')}")
    kinds = [e.get("kind") for e in events]
    faulted = "fault" in kinds
    if not kinds or kinds[0] != "commit":
        problems.append("first event is not commit")
    last = -1
    for kind in REQUIRED_ORDER:
        hits = [i for i, k in enumerate(kinds) if k == kind]
        if len(hits) > 1:
            problems.append(f"event {kind} logged {len(hits)} times")
        if not hits:
            if not faulted:
                problems.append(f"event {kind} missing")
            continue
        if hits[0] < last:
            problems.append(f"ordering violation: {kind} before its predecessor")
        last = hits[0]
    if kinds[-len(TERMINAL_EVENTS):] != list(TERMINAL_EVENTS):
        problems.append("trail does not end with breaker, outcome")
    return problems


def check_stage_chain(record: dict[str, Any]) -> list[str]:
    problems = []
    stages = record.get("reducer", {}).get("stages", {})
    prev = record.get("cefl", {}).get("ids")
    for name in sorted(stages, key=lambda s: int(s[5:])):
        st = stages[name]
        entering, surviving = st.get("entering", []), st.get("surviving", [])
        if prev is not None and sorted(entering) != sorted(prev):
            problems.append(f"{name} entering set differs from previous survivors")
        if not set(surviving) <= set(entering):
            problems.append(f"{name} survivors not a subset of entering")
        prev = surviving
    if "stage6" in stages and record.get("surfaced") != stages["stage6"]["surviving"]:
        problems.append("surfaced set differs from stage6 survivors")
    return problems


def check_commitment(record: dict[str, Any]) -> list[str]:
    ent = record.get("entropy", {})
    try:
        commitment = bytes.fromhex(ent["commitment"])
        nonce = bytes.fromhex(ent["nonce"])
        revealed = ent.get("entropy")
    except (KeyError, TypeError, ValueError):
        return ["entropy block malformed"]
    problems = []
    commit_events = [e for e in record.get("events", []) if e.get("kind") == "commit"]
    if commit_events and commit_events[0].get("commitment") != ent["commitment"]:
        problems.append("logged commitment differs from record commitment")
    if revealed is not None:
        try:
            value = bytes.fromhex(revealed)
        except ValueError:
            return problems + ["revealed entropy is not hex"]
        if hashlib.sha256(value + nonce).digest() != commitment:
            problems.append("revealed entropy does not match commitment")
    return problems


def verify_line(line: bytes | str) -> tuple[str | None, list[str]]:
    """Check one raw log line; returns ``(run_id, problems)``."""
    raw = line.encode("utf-8") if isinstance(line, str) else line
    raw = raw.rstrip(b"\n")
    try:
        record = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        return None, [f"corrupt line: {exc}"]
    if not isinstance(record, dict):
        return None, ["record is not an object"]
    run_id = record.get("run_id") if isinstance(record.get("run_id"), str) else None
    problems = []
    if dump_record(record).encode("utf-8") != raw:
        problems.append("line is not in canonical form")
    if record.get("record_digest") != record_digest(record):
        problems.append("record digest mismatch")
    schema_errors = sorted(_validator().iter_errors(record), key=lambda e: list(e.path))
    problems.extend(f"schema: {'/'.join(map(str, e.path))}: {e.message}" for e in schema_errors[:3])
    if schema_errors:
        return run_id, problems
    problems.extend(check_commitment(record))
    problems.extend(check_event_order(record["events"]))
    problems.extend(check_stage_chain(record))
    return run_id, problems


def verify_file(path: Path) -> list[tuple[int, str | None, list[str]]]:
    """Every failing line of ``path`` as ``(lineno, run_id, problems)``."""
    failures = []
    with open(path, "rb") as fh:
        data = fh.read()
    if data and not data.endswith(b"\n"):
        failures.append((data.count(b"\n") + 1, None, ["file does not end with newline"]))
    for lineno, raw in enumerate(data.split(b"\n")[:-1] if data else [], start=1):
        run_id, problems = verify_line(raw)
        if problems:
            failures.append((lineno, run_id, problems))
    return failures
