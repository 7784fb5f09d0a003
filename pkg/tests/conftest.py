import pytest

_verdicts = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, and fail the test if it did not pass."""
    lines = request.config.stash.setdefault(_verdicts, [])

    def record(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        lines.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_verdicts, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
