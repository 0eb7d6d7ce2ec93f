"""Collects acceptance verdicts and prints one line per criterion at the end."""

import pytest

VERDICTS = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, ok, detail)``; a test that dies first is a FAIL."""
    number = request.node.get_closest_marker("criterion").args[0]
    VERDICTS[number] = (False, "did not complete")

    def record(ok, detail):
        VERDICTS[number] = (bool(ok), detail)
        assert ok, detail

    return record


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
