import warnings

import pytest

ACCEPTANCE_LINES = []


def pytest_configure(config):
    warnings.filterwarnings("ignore", message="spacing .* gives fewer than 8 cells")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
