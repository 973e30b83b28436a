import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance criterion number -> [outcome, detail]
_CRITERIA = {}
_CRITERION_TEST = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def criterion(request):
    """Record a one-line measurement for the acceptance summary."""
    m = _CRITERION_TEST.search(request.node.nodeid)

    def record(detail: str) -> None:
        _CRITERIA.setdefault(int(m.group(1)), ["FAIL", ""])[1] = detail
        print(detail)
    return record


def pytest_runtest_logreport(report):
    m = _CRITERION_TEST.search(report.nodeid)
    if not m or (report.when != "call" and report.passed):
        return
    entry = _CRITERIA.setdefault(int(m.group(1)), ["FAIL", ""])
    entry[0] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {outcome}  {detail}")
