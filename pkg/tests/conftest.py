import pytest

_LINES = []


@pytest.fixture
def criterion():
    """``criterion(number, ok, detail)`` records one acceptance line and returns ``ok``."""
    def record(number, ok, detail=""):
        _LINES.append((number, bool(ok), detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(_LINES, key=lambda l: str(l[0])):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
