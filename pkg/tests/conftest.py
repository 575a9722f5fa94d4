import numpy as np
import pytest
import scipy.sparse as sp

from chimera import FactorModel, TemporalNetwork


def random_network(rng, n, d, T, directed=False, density=0.4):
    adjacency, content = [], []
    for _ in range(T):
        a = (rng.random((n, n)) < density) * rng.uniform(0.5, 2.0, (n, n))
        np.fill_diagonal(a, 0.0)
        if not directed:
            a = np.triu(a, 1)
            a = a + a.T
        c = (rng.random((n, d)) < density) * rng.uniform(0.5, 3.0, (n, d))
        adjacency.append(sp.csr_matrix(a))
        content.append(sp.csr_matrix(c))
    return TemporalNetwork(adjacency, content, directed=directed)


def random_model(rng, n, d, T, k, scale=1.0):
    return FactorModel(
        rng.uniform(0.05, 1.0, (T, n, k)) * scale,
        rng.uniform(0.05, 1.0, (n, k)) * scale,
        rng.uniform(0.05, 1.0, (d, k)) * scale,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record and print one acceptance verdict line."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
