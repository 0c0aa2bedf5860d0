import numpy as np
import pytest

from flowredirect.graph import Graph, GraphSpec, generate, sample_outrates
from flowredirect.spectral import EpiParams


def cycle(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def complete(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(n) if i != j])


def random_instance(n: int, seed: int, kind: str = "SEIR", p: float = 0.4):
    """Strongly connected ER graph with random rates, theta and epidemic parameters."""
    rng = np.random.default_rng(seed)
    g = generate(GraphSpec("erdos_renyi", n, seed, {"p": p}))
    f = sample_outrates(g, 0.05, 0.4, seed)
    theta = rng.uniform(-1, 1, g.edge_count)
    beta = rng.uniform(0.5, 2.0, n)
    gamma = rng.uniform(0.1, 0.5, n)
    delta = rng.uniform(0.1, 0.5, n)
    if kind == "SEIR":
        params = EpiParams(beta, gamma, delta)
    else:
        params = EpiParams(beta, gamma, delta, "SEPIR", 0.5 * beta, rng.uniform(0.1, 0.5, n))
    return g, f, theta, params


# one line per acceptance criterion, echoed in the terminal summary
CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_relative_error(grad, fd, loss_scale: float, h: float = 1e-5, rtol: float = 1e-5) -> float:
    """Largest componentwise relative error of ``grad`` against a central difference.

    A central difference of a loss of size ``L`` carries a rounding error of
    roughly ``eps * L / h``; components below ``10 * eps * L / (h * rtol)`` are
    measured against that level, since the oracle cannot resolve them further.
    """
    floor = 10 * np.finfo(float).eps * abs(loss_scale) / (h * rtol)
    return float(np.max(np.abs(grad - fd) / np.maximum(np.abs(fd), floor), initial=0.0))
