import pytest

from sitcontrol import reference_params

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def aedes():
    return reference_params()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
