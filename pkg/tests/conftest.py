import pytest

_CRITERIA_LINES = []


@pytest.fixture
def report(capsys):
    """Print and record one pass/fail line, then fail the test if the criterion failed."""
    def emit(number, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {detail}"
        _CRITERIA_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        assert ok, line
    return emit


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
