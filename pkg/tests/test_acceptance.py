"""Acceptance suite: one group of tests per criterion, tagged with ``acceptance``.

The terminal summary prints one PASS/FAIL line per criterion with the
measured values next to it.
"""

from __future__ import annotations

import json
import math
import random
import time
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np
import pytest
from scipy import stats

from govsel import audit
from govsel.cli import EXIT_AUDIT, EXIT_OK, main
from govsel.config import HarnessConfig, build_grid
from govsel.domain import AxisScores
from govsel.entropy import RandomStream
from govsel.harness import Faults, aggregate_logs, execute_run, load_log_dir, run_cell_records, run_grid
from govsel.metrics import cell_aggregate, group_means
from govsel.reducer import bucket_map, clamp_variance, lottery_select, pareto_frontier, partition_diversity, pstdev
from govsel.report import build_tables, render_csv
from govsel.scenarios import SCENARIOS, scenario_tasks

from helpers import make_scored

FULL = HarnessConfig()
DENSE = HarnessConfig(runs_per_task=200)  # 5 tasks x 200 = 1,000 seeded runs per cell


def _csv_bytes(cells) -> bytes:
    return "".join(render_csv(t) for t in build_tables(cells)).encode()


@pytest.fixture(scope="module")
def full_grid(tmp_path_factory):
    out = tmp_path_factory.mktemp("full_grid")
    start = time.perf_counter()
    results = run_grid(FULL, log_dir=out, jobs=1)
    elapsed = time.perf_counter() - start
    return out, results, elapsed


@pytest.fixture(scope="module")
def full_records(full_grid):
    return load_log_dir(full_grid[0])


@pytest.fixture(scope="module")
def dense_cells():
    cells = [
        c
        for spec in ("A1:B0,B1", "A2:B0,B7", "A5:B0,B4")
        for c in build_grid(DENSE, attack=spec.split(":")[0], ablation=spec.split(":")[1])
    ]
    return {r.key: r.aggregate for r in run_grid(DENSE, cells, jobs=1)}


def _margins(dense, attack, treated, base):
    per = {s: dense[(s, treated, attack)].asr - dense[(s, base, attack)].asr for s in SCENARIOS}
    return per, math.fsum(per.values()) / len(per)


# -- 1 fail-loud ------------------------------------------------------------


@pytest.mark.acceptance(1)
def test_full_grid_qdv_is_one_everywhere(full_grid, acceptance_detail):
    _, results, elapsed = full_grid
    n_runs = sum(r.n_runs for r in results)
    assert len(results) == 234 and n_runs == 5850
    bad = [r.key for r in results if r.aggregate.qdv != 1.0]
    acceptance_detail(f"{n_runs} runs in {elapsed:.1f}s, cells with QDV<1: {len(bad)}")
    assert bad == []
    assert elapsed < 60.0


@pytest.mark.acceptance(1)
def test_suppressed_flag_is_caught(acceptance_detail):
    cell = build_grid(FULL, scenario="payments_monitoring", ablation="B12", attack="A1")[0]
    records, _ = run_cell_records(cell, FULL, faults=Faults(suppress_flags=frozenset({"stage2"})))
    agg = cell_aggregate(records, *cell.key)
    acceptance_detail(f"QDV with stage2 flag suppressed {agg.qdv:.3f}")
    assert agg.qdv < 1.0


# -- 2 deterministic blocking -------------------------------------------------


@pytest.mark.acceptance(2)
@pytest.mark.parametrize("ablation", ["B9", "B10"])
def test_blocking_rows_exact(full_grid, ablation, acceptance_detail):
    cells = [r.aggregate for r in full_grid[1]]
    rows = [r for r in group_means(cells, ("scenario", "ablation")) if r.key[1] == ablation]
    assert len(rows) == len(SCENARIOS)
    for row in rows:
        assert (row.sri, row.fe, row.gd, row.qdv, row.asr) == (0.0, 0.0, 1.0, 1.0, 0.0), row.key
    acceptance_detail(f"{ablation} = (0, 0, 1, 1, 0) in {len(rows)} scenarios")


# -- 3 ordering immunity ------------------------------------------------------


@pytest.mark.acceptance(3)
def test_a4_never_succeeds(full_grid, acceptance_detail):
    a4 = [r.aggregate for r in full_grid[1] if r.key[2] == "A4"]
    assert len(a4) == 39
    assert all(c.asr == 0.0 for c in a4)
    acceptance_detail(f"ASR(A4) = 0 in {len(a4)} cells")


@pytest.mark.acceptance(3)
def test_a4_target_position_uniform(acceptance_detail):
    cfg = HarnessConfig(runs_per_task=667)
    positions: Counter[int] = Counter()
    n_runs = 0
    for cell in build_grid(cfg, ablation="B0", attack="A4"):
        records, _ = run_cell_records(cell, cfg)
        n_runs += len(records)
        for r in records:
            g = r["gate"]
            assert g is None or not g["hint_consulted"]
            if g and len(g["presented"]) == 3 and r["target"] in g["presented"]:
                positions[g["presented"].index(r["target"])] += 1
    assert n_runs >= 10_000
    counts = [positions[i] for i in range(3)]
    p = stats.chisquare(counts).pvalue
    acceptance_detail(f"A4 target positions {counts} over {n_runs} runs, chi-square p={p:.3f}")
    assert p > 0.01


# -- 4 commit-reveal ----------------------------------------------------------


@pytest.mark.acceptance(4)
def test_event_order_and_verify(full_grid, full_records, acceptance_detail):
    n = 0
    for records in full_records.values():
        for r in records:
            kinds = [e["kind"] for e in r["events"]]
            assert kinds.index("commit") < kinds.index("score") < kinds.index("reveal")
            n += 1
    assert n == 5850
    assert main(["verify", "--out", str(full_grid[0])]) == EXIT_OK
    acceptance_detail(f"commit < score < reveal in {n}/{n} records, verify exit 0")


def _scorer_view(record):
    return json.dumps({k: record[k] for k in ("scores", "rationales", "target", "attack_spec")}, sort_keys=True)


@pytest.mark.acceptance(4)
def test_scorer_output_independent_of_entropy(acceptance_detail):
    # zero CEFL jitter fixes the candidate set, so only the scorer could react to entropy
    base = HarnessConfig().baseline
    cfg = HarnessConfig(runs_per_task=3, baseline=replace(base, cefl=replace(base.cefl, jitter_scale=0.0)))
    n = exposed_changed = 0
    for cell in build_grid(cfg, ablation="B0,B4"):
        for task in scenario_tasks(cell.scenario):
            for i in range(cfg.runs_per_task):
                a = execute_run(cell, task, i, cfg.master_seed, entropy_seed=1)
                b = execute_run(cell, task, i, cfg.master_seed, entropy_seed=2)
                assert a["entropy"]["entropy"] != b["entropy"]["entropy"]
                assert a["cefl"]["ids"] == b["cefl"]["ids"]
                if cell.ablation.id == "B0":
                    assert _scorer_view(a) == _scorer_view(b)
                    n += 1
                else:
                    exposed_changed += _scorer_view(a) != _scorer_view(b)
    acceptance_detail(f"B0 scorer output identical in {n}/{n} run pairs; B4 control differs in {exposed_changed}")
    assert exposed_changed > 0


@pytest.mark.acceptance(4)
def test_exposed_entropy_raises_probing_success(dense_cells, acceptance_detail):
    per, mean = _margins(dense_cells, "A5", "B4", "B0")
    runs = sum(dense_cells[(s, b, "A5")].n_runs for s in SCENARIOS for b in ("B0", "B4"))
    shown = ", ".join(f"{s} {m:+.3f}" for s, m in per.items())
    acceptance_detail(f"A5 margin B4-B0 {mean:+.3f} over {runs} runs ({shown})")
    assert mean >= 0.1
    assert all(m > 0 for m in per.values())


# -- 5 reducer oracles --------------------------------------------------------


@dataclass(frozen=True)
class _Point:
    scores: AxisScores


def _brute_force_front(points: np.ndarray) -> np.ndarray:
    ge = (points[:, None, :] >= points[None, :, :]).all(-1)
    gt = (points[:, None, :] > points[None, :, :]).any(-1)
    return ~(ge & gt).any(0)


@pytest.mark.acceptance(5)
def test_pareto_matches_brute_force(acceptance_detail):
    rng = np.random.default_rng(5)
    mismatches = 0
    n_sets = 100_000
    for t in range(n_sets):
        n = int(rng.integers(1, 33))
        # every other set on a coarse grid so ties and duplicates are common
        pts = rng.integers(0, 5, size=(n, 3)) / 4 if t % 2 else rng.random((n, 3))
        items = [_Point(AxisScores(*map(float, row))) for row in pts]
        got = {id(p) for p in pareto_frontier(items)}
        want = _brute_force_front(pts)
        mismatches += any((id(p) in got) != bool(w) for p, w in zip(items, want))
    acceptance_detail(f"Pareto mismatches {mismatches} of {n_sets} sets")
    assert mismatches == 0


@pytest.mark.acceptance(5)
def test_clamp_bound_on_fuzzed_inputs(acceptance_detail):
    rng = random.Random(55)
    worst = 0.0
    for _ in range(20_000):
        n = rng.randint(1, 12)
        mode = rng.random()
        scored = [
            make_scored(
                f"c{i}",
                tuple(rng.choice((0.0, 1.0)) if mode < 0.3 else rng.random() for _ in range(3)),
            )
            for i in range(n)
        ]
        out, _ = clamp_variance(scored, 0.18)
        for axis in range(3):
            worst = max(worst, pstdev([s.scores.as_tuple()[axis] for s in out]))
    acceptance_detail(f"max post-clamp sigma {worst:.6f}")
    assert worst <= 0.18 + 1e-9


@pytest.mark.acceptance(5)
def test_lottery_within_three_sigma(acceptance_detail):
    n = 10_000
    weights = [0.15, 0.3, 0.45, 0.6, 0.9]
    eligible = [make_scored(f"c{i}", (w, w, w)) for i, w in enumerate(weights)]
    first = Counter(lottery_select(eligible, 1, 0, RandomStream("lottery", s)).ids[0] for s in range(n))
    explore = Counter(lottery_select(eligible, 0, 1, RandomStream("lottery", n + s)).ids[0] for s in range(n))
    worst = 0.0
    for i, w in enumerate(weights):
        for counts, p in ((first, w / sum(weights)), (explore, 1 / len(weights))):
            z = abs(counts[f"c{i}"] - n * p) / math.sqrt(n * p * (1 - p))
            worst = max(worst, z)
    acceptance_detail(f"largest lottery deviation {worst:.2f} sigma over {n} draws")
    assert worst <= 3.0


@pytest.mark.acceptance(5)
def test_bucket_caps_never_exceeded(acceptance_detail):
    rng = random.Random(7)
    checked = 0
    for _ in range(20_000):
        n = rng.randint(0, 20)
        buckets, cap_total = rng.randint(1, 4), rng.randint(1, 8)
        scored = [
            make_scored(f"c{i}", (rng.random(), rng.random(), rng.random()), category=rng.choice("abcde"))
            for i in range(n)
        ]
        out = partition_diversity(scored, buckets, cap_total)
        mapping = bucket_map([s.category for s in scored], buckets)
        per_bucket = Counter(mapping[s.category] for s in out)
        assert all(c <= math.ceil(cap_total / buckets) for c in per_bucket.values())
        checked += 1
    acceptance_detail(f"bucket caps held on {checked} fuzzed sets")


# -- 6 structural monotonicity -----------------------------------------------


@pytest.mark.acceptance(6)
def test_variance_clamp_removal_helps_a1(dense_cells, acceptance_detail):
    per, mean = _margins(dense_cells, "A1", "B1", "B0")
    shown = ", ".join(f"{s} {m:+.3f}" for s, m in per.items())
    acceptance_detail(f"A1 margin B1-B0 {mean:+.3f} ({shown})")
    assert all(m > 0 for m in per.values())


@pytest.mark.acceptance(6)
def test_threshold_exposure_does_not_hurt_a2(dense_cells, acceptance_detail):
    per, mean = _margins(dense_cells, "A2", "B7", "B0")
    shown = ", ".join(f"{s} {m:+.3f}" for s, m in per.items())
    acceptance_detail(f"A2 margin B7-B0 {mean:+.3f} ({shown})")
    assert all(m >= 0 for m in per.values())


# -- 7 replay and audit -------------------------------------------------------


@pytest.mark.acceptance(7)
def test_replay_gives_identical_tables(full_grid, acceptance_detail):
    first = [r.aggregate for r in full_grid[1]]
    second = [r.aggregate for r in run_grid(FULL, jobs=1)]
    assert _csv_bytes(first) == _csv_bytes(second)
    assert aggregate_logs(full_grid[0]) == first
    acceptance_detail(f"{len(build_tables(first))} CSV tables byte-identical, log replay equal")


@pytest.mark.acceptance(7)
def test_single_byte_tampering_detected(full_grid, tmp_path, acceptance_detail):
    lines = [
        line
        for path in audit.iter_log_files(full_grid[0])
        for line in path.read_bytes().split(b"\n")
        if line
    ]
    rng = random.Random(1000)
    mutated = []
    for line in rng.sample(lines, 1000):
        pos = rng.randrange(len(line))
        new = rng.choice([b for b in range(256) if b not in (line[pos], 0x0A)])
        mutated.append(line[:pos] + bytes([new]) + line[pos + 1:])
    missed = sum(1 for m in mutated if not audit.verify_line(m)[1])
    out = tmp_path / "tampered"
    out.mkdir()
    (out / "mutated.jsonl").write_bytes(b"\n".join(mutated) + b"\n")
    failures = audit.verify_file(out / "mutated.jsonl")
    acceptance_detail(f"{1000 - missed}/1000 tampered records detected")
    assert missed == 0 and len(failures) == 1000
    assert main(["verify", "--out", str(out)]) == EXIT_AUDIT


# -- 8 boundary ---------------------------------------------------------------


@pytest.mark.acceptance(8)
def test_b8_no_action_with_critical_flag(full_records, acceptance_detail):
    b8 = [r for key, recs in full_records.items() if key[1] == "B8" for r in recs]
    assert len(b8) == 3 * 6 * 25
    for r in b8:
        assert r["outcome"]["kind"] == "NO_ACTION"
        assert r["surfaced"] == []
        assert any(f["level"] == "CRITICAL" for f in r["flags"])
    acceptance_detail(f"{len(b8)} B8 runs, all NO_ACTION with a CRITICAL flag")
