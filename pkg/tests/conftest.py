from __future__ import annotations

from collections import defaultdict

import pytest


ACCEPTANCE_TITLES = {
    "1": "fail-loud: QDV = 1 in every cell, suppressed flag gives QDV < 1",
    "2": "deterministic blocking: B9 and B10 rows are (0, 0, 1, 1, 0)",
    "3": "ordering immunity: ASR(A4) = 0 and target position uniform",
    "4": "commit-reveal: event order, entropy independence, B4 probing margin",
    "5": "reducer oracles: Pareto, clamp, lottery, bucket caps",
    "6": "structural monotonicity: A1 under B1, A2 under B7",
    "7": "replay and audit: identical CSVs, log replay, tamper detection",
    "8": "B8 boundary: every run NO_ACTION with CRITICAL flag",
}

_outcomes: dict[str, list[bool]] = defaultdict(list)
_details: dict[str, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[str(marker.args[0])].append(report.passed)


@pytest.fixture
def acceptance_detail(request):
    """Record a measured value to print next to the criterion's verdict."""
    marker = request.node.get_closest_marker("acceptance")
    key = str(marker.args[0]) if marker else "?"
    return lambda text: _details[key].append(text)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_TITLES, key=int):
        results = _outcomes.get(key)
        if not results:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(results) else "FAIL"
        line = f"criterion {key}: {verdict}  {ACCEPTANCE_TITLES[key]}"
        if _details.get(key):
            line += "  [" + "; ".join(_details[key]) + "]"
        terminalreporter.write_line(line)
