import pytest

from ostop.diffusion import make_brownian
from ostop.reward import piecewise_linear_reward, polynomial_reward
from ostop.solver import solve

QUINTIC = [0, -4, 0, 5, 0, -1]
KINKED = [[0, 0], [1, 1], [2, 0], [3, 1]]


def quintic_problem(alpha):
    model = make_brownian(alpha)
    return model, polynomial_reward(model, QUINTIC)


def kinked_problem():
    model = make_brownian(1.0)
    return model, piecewise_linear_reward(model, KINKED)


@pytest.fixture(scope="session")
def quintic2():
    return solve(*quintic_problem(2.0))


@pytest.fixture(scope="session")
def quintic15():
    return solve(*quintic_problem(1.5))


@pytest.fixture(scope="session")
def kinked():
    return solve(*kinked_problem())


ACCEPTANCE = []


def record(number, passed, detail):
    """Log one acceptance criterion outcome; printed again in the terminal summary."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
