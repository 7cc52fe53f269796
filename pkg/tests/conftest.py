import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import verdicts  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if verdicts.RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(verdicts.RESULTS):
            terminalreporter.write_line(verdicts.RESULTS[number])
