import re

import numpy as np
import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the test passes only if ``record`` saw ``ok``."""
    name = request.node.name

    def record(ok: bool, detail: str):
        _CRITERIA[name] = (bool(ok), detail)
        assert ok, detail

    yield record
    if name not in _CRITERIA:
        _CRITERIA[name] = (False, "did not complete")


def pytest_runtest_logreport(report):
    # an exception before record() is a failure too
    name = report.nodeid.split("::")[-1]
    if report.when == "call" and report.failed and name in _CRITERIA:
        _CRITERIA[name] = (False, _CRITERIA[name][1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(re.search(r"\d+", s).group()) if re.search(r"\d+", s) else 99):
        ok, detail = _CRITERIA[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
