import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; printed in the summary."""
    def record(criterion, passed, detail=""):
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")

    def order(key):
        num = "".join(ch for ch in key if ch.isdigit())
        return int(num), key

    for key in sorted(_ACCEPTANCE, key=order):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(
            f"criterion {key:>3}: {'PASS' if passed else 'FAIL'}  {detail}")
