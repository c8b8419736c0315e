import numpy as np
import pytest

from forcingset.data import gen_halfmoon
from forcingset.model import Dataset


def fd_gradient(f, x, h=1e-6):
    """Central differences of a scalar function."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def halfmoon100():
    return gen_halfmoon(100, 0.2, 3)


@pytest.fixture
def small_dataset(rng):
    X = rng.normal(size=(30, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=30) > 0).astype(int)
    return Dataset(X, y)


class Timed:
    """Result of a session-cached experiment and its wall-clock cost."""

    def __init__(self, fn):
        import time

        t0 = time.perf_counter()
        self.value = fn()
        self.seconds = time.perf_counter() - t0


@pytest.fixture(scope="session")
def debug_runs():
    from forcingset.harness import DebugSetup, run_debug_experiment

    return Timed(lambda: run_debug_experiment(DebugSetup(), [0.1, 0.2, 0.3], range(20)))


@pytest.fixture(scope="session")
def halfmoon_walks():
    from forcingset.harness import halfmoon_walk

    return Timed(lambda: [halfmoon_walk(seed) for seed in range(20)])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
