import pytest

from tip.graph import split_train_test
from tip.synth import synth_graph

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def planted():
    return synth_graph(200, 50, 5, seed=0)


@pytest.fixture(scope="session")
def planted_split(planted):
    return split_train_test(planted, 0.8, seed=0)


@pytest.fixture(scope="session")
def small_split():
    g = synth_graph(30, 12, 3, seed=3, num_communities=3, p_hit=0.6)
    return split_train_test(g, 0.8, seed=1)
