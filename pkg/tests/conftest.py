import pytest

ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""
    def _report(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[criterion] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
