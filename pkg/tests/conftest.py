import pytest

from delayopt import IntegratorConfig, compute_sensitivities, example51_problem, solve_state
from delayopt.oracles import ClosedFormExample51


@pytest.fixture(scope="session")
def cfg():
    return IntegratorConfig(base_step=1e-3)


@pytest.fixture(scope="session")
def ex51():
    return example51_problem(0.5, horizon=1.5)


@pytest.fixture(scope="session")
def closed():
    return ClosedFormExample51(0.5)


@pytest.fixture(scope="session")
def ex51_state(ex51, cfg):
    return solve_state(ex51, cfg)


@pytest.fixture(scope="session")
def ex51_bundle(ex51, cfg, ex51_state):
    return compute_sensitivities(ex51, cfg, state=ex51_state)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
