from __future__ import annotations

import numpy as np
import pytest

from skewsurge.ingest import build_tidal_samples
from skewsurge.simulate import SimulationConfig, heysham_like_truth, simulate_records

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": "PASS", "detail": ""})
    if report.when == "setup" and report.skipped:
        entry["status"] = "SKIP"
        entry["detail"] = str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""
    elif report.when == "call":
        if report.skipped:
            entry["status"] = "SKIP"
            entry["detail"] = str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""
        elif report.failed:
            entry["status"] = "FAIL"
        details = [v for k, v in report.user_properties if k == "detail"]
        if details:
            entry["detail"] = "; ".join(details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number:>2} {e['status']:<4} {e['title']}"
        if e["detail"]:
            line += f" | {e['detail']}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def heysham_records():
    """Twenty years of synthetic records from the seasonal truth."""
    return simulate_records(SimulationConfig(heysham_like_truth(), years=20, seed=11))


@pytest.fixture(scope="session")
def heysham_tides(heysham_records):
    return build_tidal_samples(heysham_records, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
