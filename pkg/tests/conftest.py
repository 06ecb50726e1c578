import os

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def critical_point_cache(tmp_path_factory):
    """Share Newton solutions between tests through a session cache directory."""
    if not os.environ.get("SHARPLAB_CACHE"):
        os.environ["SHARPLAB_CACHE"] = str(tmp_path_factory.mktemp("critical-cache"))
    yield os.environ["SHARPLAB_CACHE"]


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(criterion: int, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:2d}: {detail}"
        ACCEPTANCE_LINES.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
