from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

_criteria: dict[str, dict] = {}


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call") or not hasattr(report, "acceptance"):
        return
    key, title = report.acceptance
    entry = _criteria.setdefault(key, {"title": title, "ok": True, "ran": False})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria, key=lambda k: int(k.lstrip("AC"))):
        entry = _criteria[key]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"{key} {status}  {entry['title']}")
