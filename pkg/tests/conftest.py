import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from foldcont import ContinuationSettings, SolutionPoint, trace_branch  # noqa: E402
from foldcont.hamiltonian import HamiltonianConfig, fd_problem, shooting_problem  # noqa: E402

SHOOT_SETTINGS = dict(ds0=0.01, ds_max=0.2, newton_tol=1e-10,
                      lambda_stop=(-0.05, 1.4), measure_max=20.0)
FD_SETTINGS = dict(ds0=0.1, ds_max=0.5, newton_tol=1e-8,
                   lambda_stop=(-0.05, 1.4), measure_max=20.0)


def trace_shooting(a, rk_steps=1024, **overrides):
    problem = shooting_problem(HamiltonianConfig(exponent=a, rk_steps=rk_steps))
    settings = ContinuationSettings(**{**SHOOT_SETTINGS, **overrides})
    return problem, trace_branch(problem, SolutionPoint.at(problem, [1.0], 0.0), settings)


def trace_fd(a, M=200, **overrides):
    problem = fd_problem(HamiltonianConfig(exponent=a, mesh_M=M))
    settings = ContinuationSettings(**{**FD_SETTINGS, **overrides})
    return problem, trace_branch(problem, SolutionPoint.at(problem, np.ones(M + 1), 0.0), settings)


@pytest.fixture(scope="session")
def shooting_a5():
    return trace_shooting(5.0)


@pytest.fixture(scope="session")
def fd_a5():
    return trace_fd(5.0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[number])
