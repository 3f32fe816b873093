import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bcechoice.dgp import ModelFamily
from bcechoice.model import BaselineProblem, FiniteSupport

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by the acceptance tests, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_problem(utility, prior, eps_pmf=None, actions=None) -> BaselineProblem:
    u = np.asarray(utility, float)
    Y, X, E, V = u.shape
    if eps_pmf is None:
        eps_pmf = np.full((X, E), 1.0 / E)
    return BaselineProblem(
        FiniteSupport.named(actions or [f"y{i}" for i in range(Y)]),
        FiniteSupport.named([f"x{i}" for i in range(X)]),
        FiniteSupport.named([f"e{i}" for i in range(E)]),
        FiniteSupport.named([f"v{i}" for i in range(V)]),
        u, np.asarray(prior, float), np.asarray(eps_pmf, float))


def instance_a() -> BaselineProblem:
    """Two actions matching two equally likely states."""
    u = np.zeros((2, 1, 1, 2))
    u[0, 0, 0] = [1.0, 0.0]
    u[1, 0, 0] = [0.0, 1.0]
    return make_problem(u, np.full((1, 1, 2), 0.5), actions=["a", "b"])


def dominance(V: int = 2) -> BaselineProblem:
    """Action ``a`` beats ``b`` in every state."""
    u = np.zeros((2, 1, 1, V))
    u[0] = 1.0
    return make_problem(u, np.full((1, 1, V), 1.0 / V), actions=["a", "b"])


def random_problem(rng: np.random.Generator, Y=None, X=None, E=None, V=None) -> BaselineProblem:
    Y = Y or int(rng.integers(2, 4))
    X = X or int(rng.integers(1, 3))
    E = E or int(rng.integers(1, 3))
    V = V or int(rng.integers(2, 4))
    u = rng.normal(size=(Y, X, E, V))
    prior = rng.dirichlet(np.ones(V), size=(X, E))
    eps = rng.dirichlet(np.ones(E), size=X)
    return make_problem(u, prior, eps)


class OneCostFamily(ModelFamily):
    """``u(a) = (1, -theta)``, ``u(b) = 0`` over two equally likely states.

    The largest BCE probability of ``a`` is ``0.5 + min(0.5, 0.5/theta)`` for
    ``theta > 0``, so observing ``P(a) = 0.8`` identifies ``theta in [0, 5/3]``.
    """

    name = "one-cost"
    param_names = ("theta",)

    def problem(self, theta):
        t = float(np.asarray(theta).ravel()[0])
        u = np.zeros((2, 1, 1, 2))
        u[0, 0, 0] = [1.0, -t]
        return make_problem(u, np.full((1, 1, 2), 0.5), actions=["a", "b"])

    @property
    def covariate_pmf(self):
        return np.ones(1)


@pytest.fixture
def inst_a():
    return instance_a()


@pytest.fixture
def dom():
    return dominance()
