import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", deadline=None, derandomize=True,
                          max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES
    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
