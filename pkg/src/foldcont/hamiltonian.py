"""Reduced Hamiltonian constraint on the unit ball.

Solves ``psi'' + (2/r) psi' + 2 pi rho psi^a = 0`` with ``psi'(0) = 0`` and
``psi(1) = 1`` in two independent ways:

* a second-order finite-difference discretization on a uniform radial mesh
  (state = nodal values, N = M + 1);
* a shooting reduction ``F(p, rho) = psi(1; p, rho) - 1`` where ``p = psi(0)``,
  integrated with fixed-step RK4 together with the variational equations for
  ``psi_p`` and ``psi_rho`` (state = ``[p]``, N = 1).

The continuation parameter ``lam`` of the engine is the density ``rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import NonFiniteError
from .problem import ProblemDefinition

TWO_PI = 2.0 * math.pi
PSI_BOUND = 1e6


@dataclass(frozen=True)
class HamiltonianConfig:
    exponent: float = 5.0
    mesh_M: int = 200
    rk_steps: int = 512
    rho_range: tuple[float, float] = (0.0, 1.5)

    def __post_init__(self):
        if not self.exponent >= 1.0:
            raise ValueError(f"exponent must be >= 1, got {self.exponent!r}")
        if self.mesh_M < 16:
            raise ValueError(f"mesh_M must be >= 16, got {self.mesh_M}")
        if self.rk_steps < 64:
            raise ValueError(f"rk_steps must be >= 64, got {self.rk_steps}")


@dataclass(frozen=True)
class RadialMesh:
    M: int

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def nodes(self) -> np.ndarray:
        r = np.arange(self.M + 1) / self.M
        r[-1] = 1.0
        return r


def _power(psi: np.ndarray, a: float) -> np.ndarray:
    if np.any(~np.isfinite(psi)) or np.any(psi <= 0.0) or np.any(psi > PSI_BOUND):
        raise NonFiniteError("conformal factor left (0, 1e6]; psi^a undefined")
    return np.exp(a * np.log(psi))


def l2_measure(values: np.ndarray) -> float:
    """Trapezoid-weighted discrete L2 norm on [0, 1]."""
    values = np.asarray(values, dtype=float)
    h = 1.0 / (values.shape[0] - 1)
    w = np.full(values.shape[0], h)
    w[0] = w[-1] = 0.5 * h
    return float(np.sqrt(w @ (values * values)))


# --- finite differences ---------------------------------------------------

def fd_residual(psi, rho: float, cfg: HamiltonianConfig) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    M = cfg.mesh_M
    if psi.shape != (M + 1,):
        raise ValueError(f"expected {M + 1} nodal values, got shape {psi.shape}")
    h = 1.0 / M
    r = RadialMesh(M).nodes
    src = TWO_PI * rho * _power(psi, cfg.exponent)
    out = np.empty(M + 1)
    # L'Hopital at the centre: laplacian -> 3 psi''(0), ghost node psi_{-1} = psi_1.
    out[0] = 6.0 * (psi[1] - psi[0]) / h ** 2 + src[0]
    out[1:M] = ((psi[2:] - 2.0 * psi[1:M] + psi[:M - 1]) / h ** 2
                + (psi[2:] - psi[:M - 1]) / (r[1:M] * h)
                + src[1:M])
    out[M] = psi[M] - 1.0
    return out


def fd_jacobian_u(psi, rho: float, cfg: HamiltonianConfig) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    M = cfg.mesh_M
    h = 1.0 / M
    a = cfg.exponent
    r = RadialMesh(M).nodes
    dsrc = TWO_PI * rho * a * _power(psi, a - 1.0)
    J = np.zeros((M + 1, M + 1))
    J[0, 0] = -6.0 / h ** 2 + dsrc[0]
    J[0, 1] = 6.0 / h ** 2
    j = np.arange(1, M)
    J[j, j - 1] = 1.0 / h ** 2 - 1.0 / (r[j] * h)
    J[j, j] = -2.0 / h ** 2 + dsrc[1:M]
    J[j, j + 1] = 1.0 / h ** 2 + 1.0 / (r[j] * h)
    J[M, M] = 1.0
    return J


def fd_jacobian_lambda(psi, rho: float, cfg: HamiltonianConfig) -> np.ndarray:
    out = TWO_PI * _power(np.asarray(psi, dtype=float), cfg.exponent)
    out[-1] = 0.0
    return out


def fd_problem(cfg: HamiltonianConfig) -> ProblemDefinition:
    return ProblemDefinition(
        name=f"hamiltonian-fd(a={cfg.exponent:g}, M={cfg.mesh_M})",
        state_dim=cfg.mesh_M + 1,
        residual=lambda u, lam: fd_residual(u, lam, cfg),
        jacobian_u=lambda u, lam: fd_jacobian_u(u, lam, cfg),
        jacobian_lambda=lambda u, lam: fd_jacobian_lambda(u, lam, cfg),
        branch_measure=lambda u, lam: float(u[0]),
        measures={"center": lambda u, lam: float(u[0]),
                  "l2": lambda u, lam: l2_measure(u)},
        lambda_range=cfg.rho_range,
    )


# --- shooting -------------------------------------------------------------

def _integrate(p: float, rho: float, a: float, n: int, record: bool = False):
    """Classical RK4 for the joint (psi, psi_p, psi_rho) system on [0, 1].

    Returns the final state, the nodal psi values when ``record`` is set, and
    the trapezoid L2 norm of psi over the RK nodes.

    Stages are written out on scalars since this loop dominates the cost of
    every shooting evaluation. The first stage at r = 0 uses the regular limit.
    """
    h = 1.0 / n
    hh = 0.5 * h
    h6 = h / 6.0
    am1 = a - 1.0
    tp = TWO_PI
    tpr = TWO_PI * rho
    cc = TWO_PI * rho * a
    bound = PSI_BOUND

    x0, x1, x2, x3, x4, x5 = p, 0.0, 1.0, 0.0, 0.0, 0.0
    trace = [p] if record else None
    sq = 0.5 * p * p
    for i in range(n):
        r = i * h
        if not 0.0 < x0 <= bound:
            raise NonFiniteError(f"psi = {x0!r} left (0, 1e6] during integration")
        w = x0 ** am1
        if i == 0:
            # laplacian = 3 f''(0) at the centre
            a1, b1, c1 = -tpr * x0 * w / 3.0, -cc * w * x2 / 3.0, -(tp * x0 * w + cc * w * x4) / 3.0
        else:
            g = 2.0 / r
            a1 = -g * x1 - tpr * x0 * w
            b1 = -g * x3 - cc * w * x2
            c1 = -g * x5 - tp * x0 * w - cc * w * x4
        g = 2.0 / (r + hh)
        # stage 2
        q0, q1, q2, q3, q4, q5 = x0 + hh * x1, x1 + hh * a1, x2 + hh * x3, x3 + hh * b1, x4 + hh * x5, x5 + hh * c1
        if not 0.0 < q0 <= bound:
            raise NonFiniteError(f"psi = {q0!r} left (0, 1e6] during integration")
        w = q0 ** am1
        d2, a2, e2, b2, f2, c2 = q1, -g * q1 - tpr * q0 * w, q3, -g * q3 - cc * w * q2, q5, -g * q5 - tp * q0 * w - cc * w * q4
        # stage 3
        q0, q1, q2, q3, q4, q5 = x0 + hh * d2, x1 + hh * a2, x2 + hh * e2, x3 + hh * b2, x4 + hh * f2, x5 + hh * c2
        if not 0.0 < q0 <= bound:
            raise NonFiniteError(f"psi = {q0!r} left (0, 1e6] during integration")
        w = q0 ** am1
        d3, a3, e3, b3, f3, c3 = q1, -g * q1 - tpr * q0 * w, q3, -g * q3 - cc * w * q2, q5, -g * q5 - tp * q0 * w - cc * w * q4
        # stage 4
        g = 2.0 / (r + h)
        q0, q1, q2, q3, q4, q5 = x0 + h * d3, x1 + h * a3, x2 + h * e3, x3 + h * b3, x4 + h * f3, x5 + h * c3
        if not 0.0 < q0 <= bound:
            raise NonFiniteError(f"psi = {q0!r} left (0, 1e6] during integration")
        w = q0 ** am1
        d4, a4, e4, b4, f4, c4 = q1, -g * q1 - tpr * q0 * w, q3, -g * q3 - cc * w * q2, q5, -g * q5 - tp * q0 * w - cc * w * q4

        x0 += h6 * (x1 + 2.0 * d2 + 2.0 * d3 + d4)
        x1 += h6 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        x2 += h6 * (x3 + 2.0 * e2 + 2.0 * e3 + e4)
        x3 += h6 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        x4 += h6 * (x5 + 2.0 * f2 + 2.0 * f3 + f4)
        x5 += h6 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        sq += x0 * x0
        if record:
            trace.append(x0)
    y = (x0, x1, x2, x3, x4, x5)
    if not all(math.isfinite(v) for v in y) or abs(x0) > bound:
        raise NonFiniteError("shooting integration overflowed")
    l2 = math.sqrt(h * (sq - 0.5 * x0 * x0))
    return y, trace, l2


@lru_cache(maxsize=8192)
def _shoot_cached(p: float, rho: float, a: float, n: int):
    y, _, l2 = _integrate(p, rho, a, n)
    return y[0] - 1.0, y[2], y[4], l2


def shoot(p: float, rho: float, cfg: HamiltonianConfig) -> tuple[float, float, float]:
    """Return ``(F, F_p, F_rho)`` at ``(p, rho)``.

    ``F = psi(1) - 1``; the derivatives come from the variational equations
    integrated jointly with ``psi``, so they are the exact derivatives of the
    discrete ``F``.
    """
    return _shoot_cached(float(p), float(rho), float(cfg.exponent), int(cfg.rk_steps))[:3]


def shoot_l2(p: float, rho: float, cfg: HamiltonianConfig) -> float:
    """Trapezoid L2 norm of the integrated profile; same as ``l2_measure`` of it."""
    return _shoot_cached(float(p), float(rho), float(cfg.exponent), int(cfg.rk_steps))[3]


def shoot_profile(p: float, rho: float, cfg: HamiltonianConfig) -> tuple[np.ndarray, np.ndarray]:
    """Radial nodes ``j / rk_steps`` and the integrated ``psi`` at each of them."""
    _, trace, _ = _integrate(float(p), float(rho), float(cfg.exponent), int(cfg.rk_steps), record=True)
    return RadialMesh(cfg.rk_steps).nodes, np.array(trace)


def shooting_problem(cfg: HamiltonianConfig) -> ProblemDefinition:
    def residual(u, lam):
        return np.array([shoot(u[0], lam, cfg)[0]])

    def jac_u(u, lam):
        return np.array([[shoot(u[0], lam, cfg)[1]]])

    def jac_lam(u, lam):
        return np.array([shoot(u[0], lam, cfg)[2]])

    return ProblemDefinition(
        name=f"hamiltonian-shooting(a={cfg.exponent:g}, steps={cfg.rk_steps})",
        state_dim=1,
        residual=residual,
        jacobian_u=jac_u,
        jacobian_lambda=jac_lam,
        branch_measure=lambda u, lam: float(u[0]),
        measures={"center": lambda u, lam: float(u[0]),
                  "l2": lambda u, lam: shoot_l2(u[0], lam, cfg)},
        lambda_range=cfg.rho_range,
    )


def linear_closed_form(r, rho: float) -> tuple[float, np.ndarray]:
    """Exact solution for exponent 1: ``psi = p sin(kr)/(kr)``, ``k = sqrt(2 pi rho)``.

    Returns ``(p, psi(r))`` with ``p = k / sin k``; valid for ``0 < rho < pi/2``.
    """
    r = np.asarray(r, dtype=float)
    k = math.sqrt(TWO_PI * rho)
    p = k / math.sin(k)
    kr = k * r
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = np.where(kr == 0.0, p, p * np.sin(kr) / np.where(kr == 0.0, 1.0, kr))
    return p, psi
