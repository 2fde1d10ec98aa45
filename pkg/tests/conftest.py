import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import _acceptance_log  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_log.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance_log.RESULTS):
        terminalreporter.write_line(_acceptance_log.line(n))
