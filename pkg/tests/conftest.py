import numpy as np
import pytest

from lifelong_vrp.core import Instance, ProblemKind


def tsp(points, id=""):
    return Instance(ProblemKind.TSP, np.asarray(points, dtype=float), id=id)


def cvrp(points, demands, capacity, depot=(0.5, 0.5), id=""):
    return Instance(ProblemKind.CVRP, np.asarray(points, dtype=float), demands=demands,
                    capacity=capacity, depot=np.asarray(depot, dtype=float), id=id)


def random_tsp(rng, n, id=""):
    return tsp(rng.uniform(size=(n, 2)), id=id or f"r{rng.integers(1 << 30)}")


def random_cvrp(rng, n, capacity=15, id=""):
    return cvrp(rng.uniform(size=(n, 2)), rng.integers(1, 10, size=n), capacity,
                id=id or f"c{rng.integers(1 << 30)}")


SQUARE = [(0, 0), (0, 1), (1, 1), (1, 0)]


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one summary line per acceptance criterion, printed after the run
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
