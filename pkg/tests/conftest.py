"""Shared pytest hooks.

Acceptance checks register one line each in ``ACCEPTANCE_LINES``; the lines are
printed in the terminal summary so they show up without ``-s``.
"""

ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)
