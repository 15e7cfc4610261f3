import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dsaqos import MarkovArrivalProcess  # noqa: E402


@pytest.fixture
def two_state():
    return MarkovArrivalProcess([[0.9, 0.1], [0.5, 0.5]], [1.0, 7.0])


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if not LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(LINES):
        terminalreporter.write_line(LINES[n])
