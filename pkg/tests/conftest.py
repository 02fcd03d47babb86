import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    1: "Battery drop: one scheduled reorganization to the follower within 6 s",
    2: "Deviant leader: leaders d1, d1, d2 with the single transition in phase 3",
    3: "Leader kill: new leader within the detection plus stack start bound",
    4: "FSM conformance over 1000 random scenarios",
    5: "Scoring oracle equivalence and translation invariance",
    6: "Codec round trip and stored golden vectors",
    7: "Table convergence over 100 fault-free seeds",
    8: "Deterministic replay of the bundled scenarios",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _outcomes.setdefault(n, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status}  {CRITERIA[n]}")
