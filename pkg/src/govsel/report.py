"""Metric tables (aligned text and CSV) and figures from cell aggregates."""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .config import ABLATION_LABELS, BOUNDARY_ABLATIONS
from .metrics import CellAggregate, GroupRow, group_means
from .scenarios import SCENARIOS
from .scorer import ATTACK_LABELS, AttackKind

METRIC_COLUMNS = ("SRI", "FE", "GD", "QDV", "ASR")
MISSING = "---"
BOUNDARY_NOTE = "* boundary case: empty candidate pool, every run is NO_ACTION"
VACUOUS_NOTE = "v QDV vacuous: no quality drop detected"
GROUPINGS = ("ablation", "attack", "cell")


@dataclass(frozen=True)
class Table:
    name: str
    title: str
    key_header: tuple[str, ...]
    rows: tuple[GroupRow, ...]


def _label(field: str, value: str) -> str:
    if field == "ablation":
        return ABLATION_LABELS.get(value, value)
    if field == "attack":
        return ATTACK_LABELS[AttackKind(value)]
    return value


def _values(row: GroupRow) -> list[float | None]:
    return [row.sri, row.fe, row.gd, row.qdv, row.asr]


def build_tables(cells: Sequence[CellAggregate]) -> list[Table]:
    """Per-scenario tables by ablation and by attack, then the two global ones."""
    tables = []
    scenarios = [s for s in SCENARIOS if any(c.scenario == s for c in cells)]
    for scenario in scenarios:
        subset = [c for c in cells if c.scenario == scenario]
        for field in ("ablation", "attack"):
            tables.append(
                Table(
                    f"{scenario}_by_{field}",
                    f"{scenario}: mean metrics by {field}",
                    (field,),
                    tuple(group_means(subset, (field,))),
                )
            )
    for field in ("ablation", "attack"):
        tables.append(
            Table(
                f"global_by_{field}",
                f"all scenarios: mean metrics by {field}",
                (field,),
                tuple(group_means(cells, (field,))),
            )
        )
    return tables


def grouped_table(cells: Sequence[CellAggregate], group_by: str) -> Table:
    """One table for ``aggregate --group-by``."""
    if group_by not in GROUPINGS:
        raise ValueError(f"group_by must be one of {GROUPINGS}")
    if group_by == "cell":
        fields = ("scenario", "ablation", "attack")
        return Table("cells", "metrics per cell", fields, tuple(group_means(cells, fields)))
    return Table(
        f"global_by_{group_by}",
        f"all scenarios: mean metrics by {group_by}",
        (group_by,),
        tuple(group_means(cells, (group_by,))),
    )


def _marker(table: Table, row: GroupRow) -> str:
    mark = ""
    if "ablation" in table.key_header and row.key[table.key_header.index("ablation")] in BOUNDARY_ABLATIONS:
        mark += "*"
    if row.qdv_vacuous:
        mark += "v"
    return mark


def render_text(table: Table) -> str:
    single = len(table.key_header) == 1
    header = list(table.key_header) + (["label"] if single else []) + list(METRIC_COLUMNS) + [""]
    body = []
    for row in table.rows:
        cols = list(row.key)
        if single:
            cols.append(_label(table.key_header[0], row.key[0]))
        cols += [MISSING if v is None else f"{v:.3f}" for v in _values(row)]
        cols.append(_marker(table, row))
        body.append(cols)
    n_key = len(header) - len(METRIC_COLUMNS) - 1
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def fmt(cols: list[str]) -> str:
        parts = [
            c.ljust(w) if i < n_key or i == len(cols) - 1 else c.rjust(w)
            for i, (c, w) in enumerate(zip(cols, widths))
        ]
        return "  ".join(parts).rstrip()

    lines = [table.title, fmt(header), "-" * len(fmt(header))]
    lines += [fmt(r) for r in body]
    notes = {m for r in body for m in r[-1]}
    if "*" in notes:
        lines.append(BOUNDARY_NOTE)
    if "v" in notes:
        lines.append(VACUOUS_NOTE)
    return "\n".join(lines) + "\n"


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*table.key_header, *(c.lower() for c in METRIC_COLUMNS), "n_cells", "boundary", "qdv_vacuous"])
    for row in table.rows:
        boundary = "ablation" in table.key_header and row.key[table.key_header.index("ablation")] in BOUNDARY_ABLATIONS
        writer.writerow(
            [
                *row.key,
                *(MISSING if v is None else f"{v:.6f}" for v in _values(row)),
                row.n_cells,
                int(boundary),
                int(row.qdv_vacuous),
            ]
        )
    return buf.getvalue()


def write_tables(tables: Sequence[Table], out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in tables:
        for suffix, text in ((".txt", render_text(t)), (".csv", render_csv(t))):
            path = out_dir / f"{t.name}{suffix}"
            path.write_text(text, encoding="utf-8")
            written.append(path)
    return written


def _bar_figure(table: Table, path: Path) -> None:
    import matplotlib.pyplot as plt

    keys = [r.key[0] for r in table.rows]
    fig, ax = plt.subplots(figsize=(max(6.0, 0.6 * len(keys) + 2), 3.8))
    metrics = ("SRI", "GD", "ASR")
    width = 0.8 / len(metrics)
    for j, name in enumerate(metrics):
        vals = [_values(r)[METRIC_COLUMNS.index(name)] for r in table.rows]
        xs = [i + (j - 1) * width for i in range(len(keys))]
        ax.bar(xs, [0.0 if v is None else v for v in vals], width, label=name)
    ax.set_xticks(range(len(keys)), keys)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("value")
    ax.set_title(table.title)
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _heatmap(cells: Sequence[CellAggregate], path: Path) -> None:
    import matplotlib.pyplot as plt

    rows = group_means(cells, ("ablation", "attack"))
    ablations = list(dict.fromkeys(r.key[0] for r in rows))
    attacks = [a for a in dict.fromkeys(r.key[1] for r in rows) if a != "NONE"]
    if not attacks:
        return
    lookup = {r.key: r.asr for r in rows}
    grid = [[lookup.get((b, a)) or 0.0 for a in attacks] for b in ablations]
    fig, ax = plt.subplots(figsize=(1.0 * len(attacks) + 2.5, 0.4 * len(ablations) + 1.5))
    im = ax.imshow(grid, vmin=0, vmax=1, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(attacks)), attacks)
    ax.set_yticks(range(len(ablations)), ablations)
    for i, row in enumerate(grid):
        for j, v in enumerate(row):
            ax.text(j, i, f"{v:.2f}", ha="center", va="center", fontsize=7, color="w" if v < 0.5 else "k")
    ax.set_title("ASR by ablation and attack")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_figures(cells: Sequence[CellAggregate], tables: Sequence[Table], out_dir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in tables:
        if t.name.startswith("global_"):
            path = out_dir / f"fig_{t.name}.png"
            _bar_figure(t, path)
            written.append(path)
    path = out_dir / "fig_asr_heatmap.png"
    _heatmap(cells, path)
    if path.exists():
        written.append(path)
    return written
