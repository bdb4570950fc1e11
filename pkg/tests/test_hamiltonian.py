import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from foldcont.errors import NonFiniteError
from foldcont.hamiltonian import (HamiltonianConfig, RadialMesh, fd_jacobian_u, fd_problem,
                                  fd_residual, l2_measure, linear_closed_form, shoot, shoot_l2,
                                  shoot_profile, shooting_problem)
from foldcont.problem import newton_correct

import oracles


def test_config_validation():
    for bad in (dict(exponent=0.5), dict(mesh_M=15), dict(rk_steps=63)):
        with pytest.raises(ValueError):
            HamiltonianConfig(**bad)


def test_mesh():
    mesh = RadialMesh(200)
    r = mesh.nodes
    assert r[0] == 0.0 and r[-1] == 1.0 and len(r) == 201
    np.testing.assert_allclose(np.diff(r), mesh.h, rtol=1e-12)


def test_fd_residual_constant_state():
    cfg = HamiltonianConfig(exponent=5.0, mesh_M=200)
    np.testing.assert_array_equal(fd_residual(np.ones(201), 0.0, cfg), np.zeros(201))
    R = fd_residual(np.ones(201), 0.1, cfg)
    np.testing.assert_allclose(R[:-1], 2.0 * math.pi * 0.1, rtol=1e-14)
    assert R[-1] == 0.0


def test_fd_residual_taylor_state():
    # The stencil is exact on quadratics, so the residual of the leading-order
    # Taylor state is exactly 2 pi rho (psi - 1) = -(2 pi rho)^2 r^2 / 6 in the interior.
    rho = 0.05
    cfg = HamiltonianConfig(exponent=1.0, mesh_M=200)
    r = RadialMesh(200).nodes
    psi = 1.0 - r ** 2 / 6.0 * (2.0 * math.pi * rho)
    R = fd_residual(psi, rho, cfg)
    np.testing.assert_allclose(R[:-1], -(2.0 * math.pi * rho) ** 2 * r[:-1] ** 2 / 6.0, atol=1e-9)
    assert np.max(np.abs(R[:-1])) <= (2.0 * math.pi * rho) ** 2 / 6.0


def test_fd_guards():
    cfg = HamiltonianConfig(exponent=5.0, mesh_M=16)
    psi = np.ones(17)
    psi[3] = -0.1
    with pytest.raises(NonFiniteError):
        fd_residual(psi, 0.1, cfg)
    psi[3] = 2e6
    with pytest.raises(NonFiniteError):
        fd_residual(psi, 0.1, cfg)


def test_fd_jacobian_structure():
    cfg = HamiltonianConfig(exponent=5.0, mesh_M=20)
    J = fd_jacobian_u(np.full(21, 1.2), 0.1, cfg)
    assert np.count_nonzero(np.triu(J, 2)) == 0 and np.count_nonzero(np.tril(J, -2)) == 0
    h = 1.0 / 20
    assert J[5, 5] == pytest.approx(-2.0 / h ** 2 + 2 * math.pi * 0.1 * 5 * 1.2 ** 4)
    assert J[-1, -1] == 1.0 and J[-1, -2] == 0.0


def test_shoot_examples():
    F, a, b = shoot(1.0, 0.0, HamiltonianConfig(exponent=5.0))
    assert F == 0.0 and a == 1.0 and abs(b + math.pi / 3.0) <= 1e-8
    F, a, _ = shoot(2.0, 0.0, HamiltonianConfig(exponent=5.0))
    assert F == 1.0 and a == 1.0
    p, _ = linear_closed_form(0.0, 0.3)
    assert abs(shoot(p, 0.3, HamiltonianConfig(exponent=1.0, rk_steps=1024))[0]) <= 1e-6


def test_shoot_matches_ivp_oracle():
    cfg = HamiltonianConfig(exponent=5.0, rk_steps=1024)
    for p, rho in [(1.3, 0.1), (1.8, 0.1), (1.1, 0.05)]:
        assert abs(shoot(p, rho, cfg)[0] - oracles.ivp_shoot(p, rho, 5.0)) <= 1e-9


def test_shoot_overflow():
    with pytest.raises(NonFiniteError):
        shoot(50.0, 1.0, HamiltonianConfig(exponent=10.0))


def test_shoot_profile_and_l2():
    cfg = HamiltonianConfig(exponent=5.0, rk_steps=256)
    r, psi = shoot_profile(1.3, 0.1, cfg)
    assert r.shape == psi.shape == (257,)
    assert psi[0] == 1.3 and abs(psi[-1] - 1.0 - shoot(1.3, 0.1, cfg)[0]) < 1e-15
    assert shoot_l2(1.3, 0.1, cfg) == pytest.approx(l2_measure(psi), rel=1e-13)


def test_shooting_newton_from_trivial():
    problem = shooting_problem(HamiltonianConfig(exponent=5.0))
    sol = newton_correct(problem, [1.3], 0.0)
    assert abs(sol.u[0] - 1.0) <= 1e-10


def test_shooting_branches_at_rho_01():
    # rho = 0.2 lies past the a = 5 fold; rho = 0.1 has both branches.
    problem = shooting_problem(HamiltonianConfig(exponent=5.0, rk_steps=1024))
    lower = oracles.bisection_roots(0.1, 5.0, 1.0, 1.6)
    upper = oracles.bisection_roots(0.1, 5.0, 1.6, 4.0)
    assert len(lower) == len(upper) == 1
    lo = newton_correct(problem, [1.1], 0.1).u[0]
    hi = newton_correct(problem, [2.5], 0.1).u[0]
    assert abs(lo - lower[0]) <= 1e-8 and abs(hi - upper[0]) <= 1e-8 and hi > lo


def test_fd_versus_shooting_central_value():
    fd = fd_problem(HamiltonianConfig(exponent=5.0, mesh_M=200))
    sh = shooting_problem(HamiltonianConfig(exponent=5.0, rk_steps=1024))
    r = RadialMesh(200).nodes
    for p_guess in (1.2, 1.8):
        ps = newton_correct(sh, [p_guess], 0.1).u[0]
        pf = newton_correct(fd, oracles.quintic_profile(r, p_guess, 0.1), 0.1, tol=1e-8).u[0]
        assert abs(ps - pf) <= 1e-3


def _fd_linear_error(M):
    rho = 0.3
    cfg = HamiltonianConfig(exponent=1.0, mesh_M=M)
    sol = newton_correct(fd_problem(cfg), np.ones(M + 1), rho, tol=1e-9)
    _, exact = oracles.linear_solution(RadialMesh(M).nodes, rho)
    return np.max(np.abs(sol.u - exact))


def test_fd_second_order():
    ratio = _fd_linear_error(100) / _fd_linear_error(200)
    assert 3.5 <= ratio <= 4.5


def test_rk4_fourth_order():
    rho = 0.3
    p, _ = oracles.linear_solution(0.0, rho)
    for n in (64, 128, 256):
        e1 = abs(shoot(p, rho, HamiltonianConfig(exponent=1.0, rk_steps=n))[0])
        e2 = abs(shoot(p, rho, HamiltonianConfig(exponent=1.0, rk_steps=2 * n))[0])
        assert 12.0 <= e1 / e2 <= 20.0


@settings(max_examples=10, deadline=None)
@given(p=st.floats(1.0, 2.0), rho=st.floats(0.0, 0.3))
def test_variational_consistency(p, rho):
    cfg = HamiltonianConfig(exponent=5.0, rk_steps=256)
    _, a, b = shoot(p, rho, cfg)
    hp, hr = 1e-5 * (1 + p), 1e-5
    fa = (shoot(p + hp, rho, cfg)[0] - shoot(p - hp, rho, cfg)[0]) / (2 * hp)
    fb = (shoot(p, rho + hr, cfg)[0] - shoot(p, rho - hr, cfg)[0]) / (2 * hr)
    assert abs(a - fa) <= 1e-6 * max(1.0, abs(a))
    assert abs(b - fb) <= 1e-6 * max(1.0, abs(b))


def test_accepted_fd_solutions_positive(fd_a5):
    _, branch = fd_a5
    assert all(np.all(pt.u > 0.0) for pt in branch.points)
