from __future__ import annotations

import pytest

# (criterion, passed, detail) lines recorded by the acceptance tests
ACCEPTANCE_LINES: list[tuple[int, bool, str]] = []


@pytest.fixture
def report():
    def record(criterion: int, passed: bool, detail: str) -> None:
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        ACCEPTANCE_LINES.append((criterion, passed, line))

    return record


def pytest_terminal_summary(terminalreporter) -> None:
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
