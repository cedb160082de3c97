"""Shared test helpers and the acceptance-report terminal section."""

import numpy as np
import pytest

# One line per acceptance criterion, printed in the terminal summary so
# the pass/fail verdicts are visible even when test output is captured.
_acceptance_lines = {}


def record_criterion(number, name, ok, detail=""):
    verdict = "PASS" if ok else "FAIL"
    line = f"criterion {number:2d} [{name}]: {verdict}"
    if detail:
        line += f" -- {detail}"
    _acceptance_lines[number] = line
    print(line, flush=True)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance_lines):
        terminalreporter.write_line(_acceptance_lines[number])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
