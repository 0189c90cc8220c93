import pytest

_RESULTS = []


@pytest.fixture
def criterion():
    """Record ``(name, passed, detail)`` for the acceptance report."""

    def record(name, passed, detail):
        _RESULTS.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_RESULTS, key=lambda r: int(r[0][1:])):
        terminalreporter.write_line(f"{name} {'PASS' if passed else 'FAIL'}  {detail}")
