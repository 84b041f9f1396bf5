import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES



_ACCEPTANCE: dict[str, tuple[str, str]] = {}


def record(criterion: str, outcome: str, detail: str) -> None:
    _ACCEPTANCE[criterion] = (outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (outcome, detail) in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{outcome:4}  {name}: {detail}")
