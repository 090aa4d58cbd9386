"""Command-line entry point: run, aggregate, report, verify, breaker-reset.

Exit codes: 0 success, 1 configuration or usage error (including refusing to
overwrite logs and missing logs), 2 internal fault during a run, 3 audit
violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from . import audit, report
from .breaker import CircuitBreaker
from .config import CONFIG_ENV, ConfigError, build_grid, load_config
from .harness import aggregate_logs, run_grid, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_AUDIT = 0, 1, 2, 3

log = logging.getLogger("govsel")


def _err(msg: str) -> None:
    print(f"govsel: {msg}", file=sys.stderr)


def _log_files(out: Path) -> list[Path]:
    return list(audit.iter_log_files(out)) if out.is_dir() else []


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["master_seed"] = args.seed
        if args.runs_per_task is not None:
            overrides["runs_per_task"] = args.runs_per_task
        if overrides:
            config = replace(config, **overrides)
        cells = build_grid(config, args.scenario, args.ablation, args.attack)
    except ConfigError as exc:
        _err(f"config error: {exc}")
        return EXIT_CONFIG
    out = Path(args.out)
    existing = _log_files(out)
    if existing and not args.force:
        _err(f"{out} already holds {len(existing)} log files; use --force to overwrite")
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    for path in existing:
        path.unlink()
    jobs = args.jobs or os.cpu_count() or 1
    results = run_grid(config, cells, out, jobs=jobs)
    filters = {"scenario": args.scenario, "ablation": args.ablation, "attack": args.attack}
    manifest = write_manifest(out, config, results, filters)
    grid = manifest["grid"]
    print(f"{grid['runs']} runs in {grid['cells']} cells written to {out}")
    faults = sum(r.internal_faults for r in results)
    if faults:
        _err(f"{faults} runs ended in an internal fault (see CRITICAL flags in the logs)")
        return EXIT_FAULT
    return EXIT_OK


def _load_cells(out: Path):
    if not _log_files(out):
        _err(f"no JSONL logs in {out}")
        return None
    try:
        return aggregate_logs(out)
    except audit.AuditLogError as exc:
        _err(str(exc))
        return EXIT_AUDIT


def cmd_aggregate(args: argparse.Namespace) -> int:
    cells = _load_cells(Path(args.out))
    if cells is None:
        return EXIT_CONFIG
    if isinstance(cells, int):
        return cells
    table = report.grouped_table(cells, args.group_by)
    sys.stdout.write(report.render_csv(table) if args.csv else report.render_text(table))
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out)
    cells = _load_cells(out)
    if cells is None:
        return EXIT_CONFIG
    if isinstance(cells, int):
        return cells
    report_dir = Path(args.report_dir) if args.report_dir else out / "report"
    tables = report.build_tables(cells)
    written = report.write_tables(tables, report_dir)
    if not args.no_figures:
        written += report.write_figures(cells, tables, report_dir)
    for t in tables:
        print(report.render_text(t))
    print(f"{len(tables)} tables and {len(written) - 2 * len(tables)} figures written to {report_dir}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    out = Path(args.out)
    files = _log_files(out)
    if not files:
        _err(f"no JSONL logs in {out}")
        return EXIT_CONFIG
    n_bad = n_lines = 0
    for path in files:
        failures = audit.verify_file(path)
        n_lines += sum(1 for _ in open(path, "rb"))
        for lineno, run_id, problems in failures:
            n_bad += 1
            print(f"{path.name}:{lineno}: run {run_id or '<unreadable>'}: {'; '.join(problems)}")
    if n_bad:
        _err(f"{n_bad} of {n_lines} records failed verification")
        return EXIT_AUDIT
    print(f"{n_lines} records in {len(files)} files verified")
    return EXIT_OK


def cmd_breaker_reset(args: argparse.Namespace) -> int:
    out = Path(args.out)
    state_path = out / "breaker_state.json"
    if not state_path.exists():
        _err(f"no breaker state in {out}")
        return EXIT_CONFIG
    state = json.loads(state_path.read_text())
    keys = sorted(state) if args.cell == "all" else [args.cell]
    unknown = [k for k in keys if k not in state]
    if unknown:
        _err(f"unknown cell {unknown[0]!r}; expected scenario/ablation/attack")
        return EXIT_CONFIG
    events = []
    for key in keys:
        breaker = CircuitBreaker.restore(state[key])
        event = {"cell": key, **breaker.reset(args.note)}
        state[key] = breaker.snapshot()
        events.append(event)
    state_path.write_text(json.dumps(state, indent=2, sort_keys=True) + "\n")
    with open(out / "operator_events.jsonl", "a", encoding="utf-8") as fh:
        for e in events:
            fh.write(audit.dump_record(e) + "\n")
    changed = sum(e["changed"] for e in events)
    print(f"reset {changed} open breaker(s) of {len(events)} cell(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="govsel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute the (filtered) grid and write JSONL logs")
    run.add_argument("--config", help=f"JSON or TOML config (default: ${CONFIG_ENV})")
    run.add_argument("--scenario", help="comma-separated scenario ids or globs")
    run.add_argument("--ablation", help="comma-separated ablation ids or globs, e.g. 'B0,B1*'")
    run.add_argument("--attack", help="comma-separated attack ids or globs")
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--runs-per-task", type=int)
    run.add_argument("--out", default="runs", help="output directory (default: runs)")
    run.add_argument("--force", action="store_true", help="overwrite existing logs")
    run.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
    run.set_defaults(func=cmd_run)

    agg = sub.add_parser("aggregate", help="print metric means from logs")
    agg.add_argument("--out", default="runs", help="log directory")
    agg.add_argument("--group-by", choices=report.GROUPINGS, default="ablation")
    agg.add_argument("--csv", action="store_true", help="CSV instead of aligned text")
    agg.set_defaults(func=cmd_aggregate)

    rep = sub.add_parser("report", help="write the eight metric tables and figures")
    rep.add_argument("--out", default="runs", help="log directory")
    rep.add_argument("--report-dir", help="destination (default: <out>/report)")
    rep.add_argument("--no-figures", action="store_true")
    rep.set_defaults(func=cmd_report)

    ver = sub.add_parser("verify", help="re-check every audit record")
    ver.add_argument("--out", default="runs", help="log directory")
    ver.set_defaults(func=cmd_verify)

    br = sub.add_parser("breaker-reset", help="operator reset of tripped breakers")
    br.add_argument("--out", default="runs", help="run directory")
    br.add_argument("--cell", default="all", help="scenario/ablation/attack, or 'all'")
    br.add_argument("--note", required=True, help="operator review note")
    br.set_defaults(func=cmd_breaker_reset)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except Exception:  # noqa: BLE001 - last-resort fault reporting
        log.exception("internal error")
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
