import numpy as np
import pytest

from ccil.data import RngStream, split
from ccil.dynamics import RegConfig, train_dynamics
from ccil.nn import TrainConfig
from ccil.pendulum import PendulumEnv

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion (shown in the terminal summary)."""

    def record(number, ok, detail):
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def env():
    return PendulumEnv.make("pendulum")


@pytest.fixture(scope="session")
def wall_env():
    return PendulumEnv.make("pendulum-wall")


@pytest.fixture(scope="session")
def small_demos(env):
    return env.gen_demos(10, 200, RngStream(3, "demos"))


@pytest.fixture(scope="session")
def small_model(small_demos):
    train, val = split(small_demos, 0.2, RngStream(3, "split"))
    reg = RegConfig("hinge", per_layer_bound=2.0, lam=0.5, sigma=3e-4)
    return train_dynamics(train, val, reg, TrainConfig(epochs=40, patience=10, seed=3), report_points=200)


@pytest.fixture
def gen():
    return np.random.default_rng(1234)
