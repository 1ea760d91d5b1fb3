import numpy as np
import pytest

from aoskit.ctmc import SymmetricSourceParams


def lumped_first_period(n: int, sigma: float, lam: float, size: int, seed: int):
    """Monte-Carlo draws over one Exp(lam) transmission started in state 0.

    Returns ``(same, delta0)``: whether the source is back in state 0 when the
    transmission lands, and the time since it last occupied state 0 then.
    """
    rng = np.random.default_rng(seed)
    L = rng.exponential(1 / lam, size)
    t = np.zeros(size)
    x = np.zeros(size, dtype=np.int64)
    last0 = np.zeros(size)
    alive = np.ones(size, dtype=bool)
    while alive.any():
        idx = np.flatnonzero(alive)
        tn = t[idx] + rng.exponential(1 / sigma, idx.size)
        ends = tn >= L[idx]
        fin = idx[ends]
        last0[fin] = np.where(x[fin] == 0, L[fin], last0[fin])
        alive[fin] = False
        go = idx[~ends]
        leaving0 = x[go] == 0
        last0[go[leaving0]] = tn[~ends][leaving0]
        step = rng.integers(1, n, go.size)
        x[go] = (x[go] + step) % n
        t[go] = tn[~ends]
    same = x == 0
    delta0 = np.where(same, 0.0, L - last0)
    return same, delta0


@pytest.fixture
def binary():
    return SymmetricSourceParams(2, 1.0)


@pytest.fixture
def quad():
    return SymmetricSourceParams(4, 1.0)


# acceptance verdict lines, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
