import pytest

# lines recorded by the acceptance suite, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion and fail the test on FAIL."""
    def report(number: int, title: str, passed: bool, detail: str = "", seconds: float = 0.0,
               budget: float | None = None):
        timely = budget is None or seconds < budget
        ok = bool(passed) and timely
        timing = f"{seconds:.1f}s" + (f" / {budget:.0f}s" if budget is not None else "")
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {title} [{timing}] {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line
        assert timely, f"criterion {number} exceeded its runtime budget: {timing}"
    return report
