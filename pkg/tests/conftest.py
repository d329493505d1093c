import numpy as np
import pytest

from dagt import canonical_instance, make_graph, metropolis_weights, solve

# filled by test_acceptance; echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def spec():
    return canonical_instance()


@pytest.fixture(scope="session")
def ring5():
    return make_graph("ring", 5)


@pytest.fixture(scope="session")
def A(ring5):
    return metropolis_weights(ring5)


@pytest.fixture(scope="session")
def optimum(spec):
    return solve(spec)


@pytest.fixture(scope="session")
def x0(spec):
    return list(spec.instance.x0)


@pytest.fixture(scope="session")
def xm(spec):
    return list(spec.instance.x_minus1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_tanh_game(dims=(1, 2, 3, 2), agg_dim=2, c=0.3, seed=7):
    """Agents of mixed dimension with a nonlinear aggregate ``phi_i(x) = B_i tanh(x)``."""
    from dagt.problem import AgentOracle, ProblemSpec, SmoothnessConstants

    r = np.random.default_rng(seed)
    agents = []
    for n in dims:
        B = r.normal(size=(agg_dim, n)) / np.sqrt(n)
        ref, goal = r.normal(size=n), r.normal(size=agg_dim)

        def cost(x, u, ref=ref, goal=goal):
            return 0.5 * float((x - ref) @ (x - ref)) + 0.5 * c * float((u - goal) @ (u - goal))

        agents.append(AgentOracle(
            cost,
            lambda x, u, ref=ref: x - ref,
            lambda x, u, goal=goal: c * (u - goal),
            lambda x, B=B: B @ np.tanh(x),
            lambda x, B=B: (B * (1 - np.tanh(x) ** 2)).T,
        ))
    consts = SmoothnessConstants(m=0.5, L1=3.0, L2=2.0, L3=2.0)
    return ProblemSpec(tuple(agents), tuple(dims), agg_dim, constants=consts)


@pytest.fixture(scope="session")
def tanh_game():
    return make_tanh_game()
