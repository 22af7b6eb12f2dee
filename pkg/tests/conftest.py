import re
from collections import OrderedDict

import numpy as np
import pytest

from collision_channel import ThresholdProblem, make_distribution

_CRITERIA: "OrderedDict[int, list[tuple[str, str]]]" = OrderedDict()
_CRIT_RE = re.compile(r"test_criterion_(\d+)")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def gauss_problem():
    def make(n, k, scale=1.0, family="gaussian"):
        return ThresholdProblem(n, k, make_distribution(family, scale))
    return make


def pytest_runtest_logreport(report):
    m = _CRIT_RE.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _CRITERIA.setdefault(int(m.group(1)), []).append((name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        parts = _CRITERIA[num]
        ok = all(outcome == "passed" for _, outcome in parts)
        failed = [name for name, outcome in parts if outcome != "passed"]
        detail = f"{len(parts)} check(s)" if ok else "failing: " + ", ".join(failed)
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({detail})")
