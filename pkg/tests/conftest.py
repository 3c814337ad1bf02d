import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from acceptance_report import RESULTS, summary_lines  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in summary_lines():
        terminalreporter.write_line(line)
