"""Shared pytest plumbing: the acceptance suite records one line per criterion."""
import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Return ``record(label, passed, detail)``; lines are printed after the run."""

    def record(label, passed, detail=""):
        _ACCEPTANCE.append((label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}")
