import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cipmc.fixtures import builtin  # noqa: E402


@pytest.fixture(scope="session")
def ns2():
    return builtin("ns", 2)


@pytest.fixture(scope="session")
def ksl2():
    return builtin("ksl", 2)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
