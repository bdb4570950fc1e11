import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldcont import normal_forms
from foldcont.errors import JacobianMismatch, NoConvergence, NonFiniteError
from foldcont.hamiltonian import HamiltonianConfig, fd_problem, shooting_problem
from foldcont.problem import (ProblemDefinition, SolutionPoint, TangentVector, fd_jacobian_lambda,
                              fd_jacobian_u, newton_correct, validate_jacobians)

import oracles


def _problem(f, n, **kw):
    return ProblemDefinition(name="test", state_dim=n, residual=f, **kw)


def test_fd_jacobian_identity():
    p = _problem(lambda u, lam: u, 3)
    np.testing.assert_allclose(fd_jacobian_u(p, [0.3, -2.0, 7.0], 0.0), np.eye(3), atol=1e-8)


def test_fd_jacobian_polynomial():
    p = _problem(lambda u, lam: np.array([u[0] ** 2, u[1]]), 2)
    np.testing.assert_allclose(fd_jacobian_u(p, [3.0, 5.0], 0.0), [[6.0, 0.0], [0.0, 1.0]], atol=1e-6)


def test_fd_jacobian_lambda_examples():
    p = _problem(lambda u, lam: u - lam, 3)
    np.testing.assert_allclose(fd_jacobian_lambda(p, [1.0, 2.0, 3.0], 0.4), -np.ones(3), atol=1e-8)
    q = _problem(lambda u, lam: u, 2)
    np.testing.assert_array_equal(fd_jacobian_lambda(q, [1.0, 2.0], 0.4), np.zeros(2))


def test_fd_jacobian_nonfinite():
    p = _problem(lambda u, lam: u if u[0] > 1.0 else np.full(1, np.inf), 1)
    with pytest.raises(NonFiniteError):
        fd_jacobian_u(p, [1.0], 0.0)


def test_flagship_fd_jacobians_match_analytic():
    problem = fd_problem(HamiltonianConfig(exponent=5.0, mesh_M=200))
    u = np.ones(201)
    J = problem.F_u(u, 0.1)
    err = np.max(np.abs(fd_jacobian_u(problem, u, 0.1) - J)) / np.max(np.abs(J))
    assert err <= 1e-5
    # d/drho of the source term 2 pi rho psi^a is 2 pi at psi = 1; Dirichlet row is 0.
    expected = np.full(201, 2.0 * math.pi)
    expected[-1] = 0.0
    np.testing.assert_allclose(fd_jacobian_lambda(problem, u, 0.0), expected, rtol=1e-8, atol=1e-10)
    np.testing.assert_allclose(problem.F_lambda(u, 0.0), expected, rtol=1e-15)


@pytest.mark.parametrize("make", [
    lambda: fd_problem(HamiltonianConfig(exponent=5.0, mesh_M=64, rho_range=(0.0, 0.1))),
    lambda: fd_problem(HamiltonianConfig(exponent=1.25, mesh_M=64, rho_range=(0.0, 0.5))),
    lambda: shooting_problem(HamiltonianConfig(exponent=5.0, rk_steps=256, rho_range=(0.0, 0.05))),
    lambda: shooting_problem(HamiltonianConfig(exponent=1.0, rk_steps=256, rho_range=(0.0, 1.4))),
    normal_forms.line, normal_forms.quadratic_fold, normal_forms.transcritical, normal_forms.cubic,
])
def test_shipped_jacobians_validate(make):
    assert validate_jacobians(make(), probes=20) <= 1e-5


def test_validate_jacobians_catches_wrong_derivative():
    p = ProblemDefinition("bad", 1, lambda u, l: u * u - l, jacobian_u=lambda u, l: np.array([[u[0]]]),
                          lambda_range=(0.0, 1.0))
    with pytest.raises(JacobianMismatch):
        validate_jacobians(p)


def test_newton_sqrt2():
    sol = newton_correct(normal_forms.quadratic_fold(), [1.5], 2.0)
    assert abs(sol.u[0] - math.sqrt(2.0)) <= 1e-10
    assert sol.residual_norm <= 1e-10 and sol.iterations > 0


def test_newton_fd_laplace_start():
    problem = fd_problem(HamiltonianConfig(exponent=5.0, mesh_M=200))
    sol = newton_correct(problem, np.ones(201), 0.0)
    assert sol.iterations <= 2
    np.testing.assert_array_equal(sol.u, np.ones(201))


def test_newton_fd_lower_branch_matches_oracle():
    # No a = 5 solutions exist at rho = 0.2 (the fold is at 3/(8 pi)); rho = 0.1 is used instead.
    rho = 0.1
    p_lo, _ = oracles.quintic_roots(rho)
    problem = fd_problem(HamiltonianConfig(exponent=5.0, mesh_M=200))
    r = np.linspace(0.0, 1.0, 201)
    guess = 1.0 + 0.2 * (1.0 - r ** 2)
    sol = newton_correct(problem, guess, rho, tol=1e-8)
    p_shoot = oracles.bisection_roots(rho, 5.0, 1.0, 1.6)
    assert len(p_shoot) == 1 and abs(p_shoot[0] - p_lo) < 1e-9
    assert abs(sol.u[0] - p_shoot[0]) <= 1e-4


def test_newton_no_convergence_carries_iterate():
    p = _problem(lambda u, lam: u * u + 1.0, 1, jacobian_u=lambda u, l: np.array([[2.0 * u[0]]]))
    with pytest.raises(NoConvergence) as info:
        newton_correct(p, [0.5], 0.0, max_iter=5)
    assert info.value.u is not None and info.value.residual_norm >= 1.0


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.1, 4.0), u0=st.floats(0.5, 3.0))
def test_newton_idempotent(lam, u0):
    p = normal_forms.quadratic_fold()
    sol = newton_correct(p, [u0], lam)
    again = newton_correct(p, sol.u, lam)
    assert np.max(np.abs(again.u - sol.u)) < 1e-9


def test_solution_point_recomputes_residual():
    p = normal_forms.quadratic_fold()
    pt = SolutionPoint.at(p, [2.0], 3.0)
    assert pt.residual_norm == 1.0 and pt.measure == 2.0


def test_tangent_vector_normalization():
    with pytest.raises(ValueError):
        TangentVector(np.array([1.0]), 1.0)
    t = TangentVector.normalized([3.0], 4.0)
    assert abs(t.dlam - 0.8) < 1e-15 and abs(t.dot(-t) + 1.0) < 1e-15


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.floats(-1e3, 1e3))
def test_tangent_normalized_property(du, dlam):
    if np.linalg.norm(np.append(du, dlam)) < 1e-6:
        return
    t = TangentVector.normalized(du, dlam)
    assert abs(t.du @ t.du + t.dlam ** 2 - 1.0) <= 1e-12
