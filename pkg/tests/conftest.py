"""Shared pytest plumbing: surfaces the acceptance criteria verdicts.

The acceptance tests record one line per criterion; printing them from a
terminal-summary hook keeps them visible in captured (non ``-s``) runs.
"""

acceptance_lines = []


def pytest_terminal_summary(terminalreporter):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.line(line)
