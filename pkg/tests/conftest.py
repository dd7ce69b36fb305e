"""Shared helpers: a per-criterion pass/fail line printed after the run."""

from contextlib import contextmanager

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record one PASS/FAIL line for a named acceptance criterion."""

    @contextmanager
    def _criterion(name):
        try:
            yield
        except BaseException:
            ACCEPTANCE_LINES.append(f"FAIL  {name}")
            raise
        ACCEPTANCE_LINES.append(f"PASS  {name}")

    return _criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
