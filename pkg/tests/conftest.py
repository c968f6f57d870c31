import numpy as np
import pytest

from rlconformal.policies import SwitchPolicy


def chain_matrix(p12, p21):
    return np.array([[1 - p12, p12], [p21, 1 - p21]])


def bellman_values(p12, p21, gamma=0.8, rewards=(2.0, 1.0)):
    """Exact two-state values from the 2x2 linear system."""
    P = chain_matrix(p12, p21)
    return np.linalg.solve(np.eye(2) - gamma * P, np.asarray(rewards))


class ConstantModel:
    """State-conditioned stand-in with the same particles in every state."""

    backend = "const"
    state_action = False

    def __init__(self, particles):
        self.p = np.sort(np.asarray(particles, dtype=float))

    def value(self, states, target=None):
        return np.full(np.asarray(states).shape[0], self.p.mean())

    def sample(self, states, rng, target=None):
        return rng.choice(self.p, np.asarray(states).shape[0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def behavior():
    return SwitchPolicy(0.4, 0.8)


@pytest.fixture
def target_policy():
    return SwitchPolicy(0.5, 0.7)


# acceptance criteria report one line each; printed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, title, ok, detail):
    ACCEPTANCE[number] = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}  {title}: {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 12):
        line = ACCEPTANCE.get(n)
        if line is None:
            line = f"[SKIP] criterion {n:>2}  not run in this session"
            if n == 11:
                line += " (long-running; select with -m slow)"
        terminalreporter.write_line(line)
