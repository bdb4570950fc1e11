"""Independent reference solutions, sharing no code with the package."""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

R0 = 1e-4


def ivp_shoot(p, rho, a, rtol=1e-12):
    """psi(1) - 1 from an adaptive DOP853 integration started off the centre.

    The start at r = R0 uses the series psi = p - c r^2 / 6 + c^2 a r^4 / (120 p),
    with c = 2 pi rho p^a.
    """
    c = 2.0 * math.pi * rho * p ** a
    psi0 = p - c * R0 ** 2 / 6.0 + c * c * a * R0 ** 4 / (120.0 * p)
    dpsi0 = -c * R0 / 3.0 + c * c * a * R0 ** 3 / (30.0 * p)

    def rhs(r, y):
        return [y[1], -2.0 / r * y[1] - 2.0 * math.pi * rho * abs(y[0]) ** a]

    sol = solve_ivp(rhs, (R0, 1.0), [psi0, dpsi0], method="DOP853", rtol=rtol, atol=1e-14)
    return sol.y[0, -1] - 1.0


def bisection_roots(rho, a, lo, hi, samples=200):
    """All sign changes of the oracle F(., rho) on a uniform p grid in (lo, hi], refined by brentq."""
    ps = np.linspace(lo, hi, samples + 1)[1:]
    vals = [ivp_shoot(p, rho, a) for p in ps]
    roots = []
    for p0, p1, f0, f1 in zip(ps, ps[1:], vals, vals[1:]):
        if f0 == 0.0:
            roots.append(p0)
        elif f0 * f1 < 0.0:
            roots.append(brentq(lambda p: ivp_shoot(p, rho, a), p0, p1, xtol=1e-13))
    return roots


# Exponent 5 has the closed-form family psi = p (1 + 2 pi rho p^4 r^2 / 3)^(-1/2);
# psi(1) = 1 gives (2 pi rho / 3) p^4 - p^2 + 1 = 0.
RHO_C_QUINTIC = 3.0 / (8.0 * math.pi)
P_C_QUINTIC = math.sqrt(2.0)


def quintic_roots(rho):
    """Central values p of the two a = 5 solutions at 0 < rho < 3 / (8 pi), ascending."""
    q = 2.0 * math.pi * rho / 3.0
    disc = 1.0 - 4.0 * q
    if disc < 0:
        return []
    return sorted(math.sqrt((1.0 + s * math.sqrt(disc)) / (2.0 * q)) for s in (-1.0, 1.0))


def quintic_profile(r, p, rho):
    return p / np.sqrt(1.0 + 2.0 * math.pi * rho * p ** 4 * np.asarray(r) ** 2 / 3.0)


def linear_solution(r, rho):
    """Exponent 1: psi = p sin(kr) / (kr), k = sqrt(2 pi rho), p = k / sin k."""
    k = math.sqrt(2.0 * math.pi * rho)
    p = k / math.sin(k)
    r = np.asarray(r, dtype=float)
    return p, p * np.sinc(k * r / math.pi)
