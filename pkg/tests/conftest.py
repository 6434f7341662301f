import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one human-readable status line per acceptance criterion."""

    def emit(line):
        ACCEPTANCE_LINES.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
