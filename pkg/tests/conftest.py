import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(name, ok, detail=""):
        _ACCEPTANCE.append(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
