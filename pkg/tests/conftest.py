import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def record(request):
    """Log one acceptance line: record(criterion, passed, detail)."""
    lines = request.config.stash.setdefault(_LINES, [])

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        lines.append((criterion, bool(passed), detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(lines, key=lambda t: _order(t[0])):
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def _order(label: str):
    head = label.split()[0]
    digits = "".join(ch for ch in head if ch.isdigit())
    return (int(digits) if digits else 99, head)
