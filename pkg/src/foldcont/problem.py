"""Parameterized nonlinear systems ``F(u, lam) = 0`` and the Newton corrector."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import JacobianMismatch, NoConvergence, NonFiniteError
from .linalg import lu_solve

Residual = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ProblemDefinition:
    """A parameterized system the continuation engine can drive.

    ``jacobian_u`` and ``jacobian_lambda`` are optional; when missing, central
    finite differences of ``residual`` are used. Implementations must be
    reentrant: the engine may evaluate distinct runs concurrently.
    """

    name: str
    state_dim: int
    residual: Residual
    jacobian_u: Callable[[np.ndarray, float], np.ndarray] | None = None
    jacobian_lambda: Callable[[np.ndarray, float], np.ndarray] | None = None
    branch_measure: Callable[[np.ndarray, float], float] | None = None
    measures: Mapping[str, Callable[[np.ndarray, float], float]] = field(default_factory=dict)
    lambda_range: tuple[float, float] = (-1.0, 1.0)

    def F(self, u, lam) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        r = np.asarray(self.residual(u, float(lam)), dtype=float).reshape(-1)
        if r.shape[0] != self.state_dim:
            raise ValueError(f"{self.name}: residual has length {r.shape[0]}, expected {self.state_dim}")
        if not np.all(np.isfinite(r)):
            raise NonFiniteError(f"{self.name}: non-finite residual at lam={lam!r}")
        return r

    def F_u(self, u, lam) -> np.ndarray:
        if self.jacobian_u is None:
            return fd_jacobian_u(self, u, lam)
        J = np.asarray(self.jacobian_u(np.asarray(u, dtype=float), float(lam)), dtype=float)
        return J.reshape(self.state_dim, self.state_dim)

    def F_lambda(self, u, lam) -> np.ndarray:
        if self.jacobian_lambda is None:
            return fd_jacobian_lambda(self, u, lam)
        f = np.asarray(self.jacobian_lambda(np.asarray(u, dtype=float), float(lam)), dtype=float)
        return f.reshape(self.state_dim)

    def measure(self, u, lam) -> float:
        if self.branch_measure is None:
            return float(np.linalg.norm(u))
        return float(self.branch_measure(np.asarray(u, dtype=float), float(lam)))


@dataclass(eq=False)
class SolutionPoint:
    """A state ``u`` at parameter ``lam`` with its diagnostics.

    Build with :meth:`at` so that ``residual_norm`` and ``measure`` are
    computed from the problem rather than trusted.
    """

    u: np.ndarray
    lam: float
    residual_norm: float
    measure: float
    iterations: int = 0
    arclength_residual: float = 0.0

    @classmethod
    def at(cls, problem: ProblemDefinition, u, lam, iterations: int = 0,
           arclength_residual: float = 0.0) -> "SolutionPoint":
        u = np.array(u, dtype=float, copy=True).reshape(-1)
        lam = float(lam)
        rnorm = float(np.max(np.abs(problem.F(u, lam))))
        return cls(u, lam, rnorm, problem.measure(u, lam), iterations, arclength_residual)

    def x(self) -> np.ndarray:
        return np.append(self.u, self.lam)


@dataclass(eq=False)
class TangentVector:
    """Unit direction ``(du, dlam)`` along a branch."""

    du: np.ndarray
    dlam: float

    def __post_init__(self):
        self.du = np.asarray(self.du, dtype=float).reshape(-1)
        self.dlam = float(self.dlam)
        norm2 = float(self.du @ self.du + self.dlam ** 2)
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"tangent not normalized: |t|^2 = {norm2!r}")

    @classmethod
    def normalized(cls, du, dlam) -> "TangentVector":
        v = np.append(np.asarray(du, dtype=float).reshape(-1), float(dlam))
        v /= np.linalg.norm(v)
        return cls(v[:-1], v[-1])

    def as_array(self) -> np.ndarray:
        return np.append(self.du, self.dlam)

    def dot(self, other: "TangentVector") -> float:
        return float(self.du @ other.du + self.dlam * other.dlam)

    def __neg__(self) -> "TangentVector":
        return TangentVector(-self.du, -self.dlam)


def fd_jacobian_u(problem: ProblemDefinition, u, lam) -> np.ndarray:
    """Central-difference Jacobian with respect to the state."""
    u = np.asarray(u, dtype=float)
    n = problem.state_dim
    J = np.empty((n, n))
    for j in range(n):
        h = 1e-6 * (1.0 + abs(u[j]))
        up = u.copy()
        um = u.copy()
        up[j] += h
        um[j] -= h
        J[:, j] = (problem.F(up, lam) - problem.F(um, lam)) / (2.0 * h)
    return J


def fd_jacobian_lambda(problem: ProblemDefinition, u, lam) -> np.ndarray:
    """Central-difference derivative with respect to the parameter."""
    lam = float(lam)
    h = 1e-6 * (1.0 + abs(lam))
    return (problem.F(u, lam + h) - problem.F(u, lam - h)) / (2.0 * h)


def newton_correct(problem: ProblemDefinition, u0, lam, tol: float = 1e-10,
                   max_iter: int = 20) -> SolutionPoint:
    """Plain full-step Newton at fixed ``lam``.

    Raises NoConvergence (carrying the last iterate) if the infinity norm of
    the residual does not reach ``tol`` within ``max_iter`` iterations.
    """
    u = np.array(u0, dtype=float, copy=True).reshape(-1)
    lam = float(lam)
    r = problem.F(u, lam)
    rnorm = float(np.max(np.abs(r)))
    for it in range(max_iter + 1):
        if rnorm <= tol:
            return SolutionPoint(u, lam, rnorm, problem.measure(u, lam), iterations=it)
        if it == max_iter:
            break
        u = u + lu_solve(problem.F_u(u, lam), -r)
        try:
            r = problem.F(u, lam)
        except NonFiniteError as exc:
            raise NoConvergence(str(exc), u=u, lam=lam, iterations=it + 1) from exc
        rnorm = float(np.max(np.abs(r)))
    raise NoConvergence(f"{problem.name}: Newton did not converge at lam={lam!r} "
                        f"(|F| = {rnorm:.3e})", u=u, lam=lam, residual_norm=rnorm,
                        iterations=max_iter)


def validate_jacobians(problem: ProblemDefinition, probes: int = 20, seed: int = 0,
                       u_range: tuple[float, float] = (0.5, 3.0), tol: float = 1e-5) -> float:
    """Compare analytic Jacobians against finite differences at random probes.

    Returns the worst relative discrepancy; raises JacobianMismatch above ``tol``.
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.lambda_range
    worst = 0.0
    for _ in range(probes):
        u = rng.uniform(*u_range, size=problem.state_dim)
        lam = float(rng.uniform(lo, hi))
        pairs = []
        if problem.jacobian_u is not None:
            pairs.append((problem.F_u(u, lam), fd_jacobian_u(problem, u, lam)))
        if problem.jacobian_lambda is not None:
            pairs.append((problem.F_lambda(u, lam), fd_jacobian_lambda(problem, u, lam)))
        for exact, approx in pairs:
            denom = max(float(np.max(np.abs(exact))), 1e-300)
            worst = max(worst, float(np.max(np.abs(exact - approx))) / denom)
    if worst > tol or math.isnan(worst):
        raise JacobianMismatch(f"{problem.name}: Jacobian mismatch {worst:.3e} > {tol:.1e}")
    return worst
