import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA.setdefault(number, []).append((bool(passed), detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        for passed, detail in _CRITERIA[n]:
            terminalreporter.write_line(f"criterion {n}: {'PASS' if passed else 'FAIL'}  {detail}")
