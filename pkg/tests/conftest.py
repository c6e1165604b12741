import numpy as np
import pytest

from cogworkspace.harness import load_corpus

# filled by test_acceptance, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def index():
    return load_corpus()


@pytest.fixture(scope="session")
def conflict_index():
    return load_corpus(conflict=True)


def unit(i: int, dim: int = 8) -> np.ndarray:
    v = np.zeros(dim)
    v[i % dim] = 1.0
    return v
