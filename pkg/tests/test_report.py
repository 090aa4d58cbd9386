from __future__ import annotations

import csv
import io

from govsel.metrics import CellAggregate
from govsel.report import MISSING, build_tables, grouped_table, render_csv, render_text, write_figures, write_tables

CELLS = [
    CellAggregate("fraud_detection", "B0", "NONE", 0.1, 2.0, 0.0, 1.0, None, 10, qdv_vacuous=True),
    CellAggregate("fraud_detection", "B0", "A1", 0.3, 2.2, 0.1, 1.0, 0.5, 10),
    CellAggregate("fraud_detection", "B8", "A1", 0.0, 0.0, 1.0, 1.0, 0.0, 10),
    CellAggregate("qbr_analysis", "B0", "A1", 0.5, 2.4, 0.3, 0.5, 0.25, 10),
]


def test_table_set():
    names = [t.name for t in build_tables(CELLS)]
    assert names == [
        "fraud_detection_by_ablation",
        "fraud_detection_by_attack",
        "qbr_analysis_by_ablation",
        "qbr_analysis_by_attack",
        "global_by_ablation",
        "global_by_attack",
    ]


def test_text_rendering_marks_boundary_and_missing():
    t = grouped_table(CELLS, "attack")
    text = render_text(t)
    assert MISSING in text
    abl = render_text(grouped_table(CELLS, "ablation"))
    assert "* boundary case" in abl
    assert "0.300" in render_text(grouped_table(CELLS, "cell"))


def test_csv_values():
    rows = list(csv.DictReader(io.StringIO(render_csv(grouped_table(CELLS, "ablation")))))
    b0 = rows[0]
    assert b0["ablation"] == "B0" and b0["n_cells"] == "3"
    assert float(b0["asr"]) == (0.5 + 0.25) / 2
    assert rows[1]["boundary"] == "1"


def test_files_written(tmp_path):
    tables = build_tables(CELLS)
    written = write_tables(tables, tmp_path)
    assert len(written) == 2 * len(tables)
    figs = write_figures(CELLS, tables, tmp_path)
    assert {p.name for p in figs} == {"fig_global_by_ablation.png", "fig_global_by_attack.png", "fig_asr_heatmap.png"}
    assert all(p.stat().st_size > 0 for p in figs)
