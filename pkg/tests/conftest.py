import os
from pathlib import Path

import numpy as np
import pytest

from pidae.synthetic import generate

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def dataset_path() -> Path | None:
    """Prepared (or raw) public building dataset, if the environment points at one."""
    value = os.environ.get("PIDAE_BERKELEY_DATA")
    return Path(value) if value else None


@pytest.fixture(scope="session")
def small_synthetic():
    return generate(days=19, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        detail = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            detail = report.longrepr[2]
        elif report.outcome == "failed":
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        previous = _ACCEPTANCE.get(number)
        if previous is None or previous[0] == "PASS":
            _ACCEPTANCE[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[number]
        line = f"criterion {number}: {status}  {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
