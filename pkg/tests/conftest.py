"""Shared pytest plumbing: surface acceptance verdicts in the terminal summary.

Pytest captures stdout from passing tests, which would hide the one-line
pass/fail verdicts the acceptance suite emits. Tests register their lines
here and a terminal-summary hook prints them uncaptured at the end of the
run.
"""

acceptance_lines: list = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
