"""Scalar normal forms with known branch geometry, used to exercise the engine."""

import numpy as np

from .problem import ProblemDefinition


def _scalar(name, f, fu, flam, lambda_range=(-2.0, 2.0)):
    return ProblemDefinition(
        name=name,
        state_dim=1,
        residual=lambda u, lam: np.array([f(u[0], lam)]),
        jacobian_u=lambda u, lam: np.array([[fu(u[0], lam)]]),
        jacobian_lambda=lambda u, lam: np.array([flam(u[0], lam)]),
        branch_measure=lambda u, lam: float(u[0]),
        lambda_range=lambda_range,
    )


def line() -> ProblemDefinition:
    """``u - lam``: a regular branch, no critical points."""
    return _scalar("u - lam", lambda u, l: u - l, lambda u, l: 1.0, lambda u, l: -1.0)


def quadratic_fold(scale: float = 1.0) -> ProblemDefinition:
    """``u^2 - scale * lam``: one quadratic fold at the origin."""
    return _scalar(f"u^2 - {scale:g} lam", lambda u, l: u * u - scale * l,
                   lambda u, l: 2.0 * u, lambda u, l: -scale)


def transcritical() -> ProblemDefinition:
    """``u^2 - lam u``: branches ``u = 0`` and ``u = lam`` cross at the origin."""
    return _scalar("u^2 - lam u", lambda u, l: u * u - l * u,
                   lambda u, l: 2.0 * u - l, lambda u, l: -u)


def cubic() -> ProblemDefinition:
    """``u^3 - 3u - lam``: folds at ``(u, lam) = (-1, 2)`` and ``(1, -2)``."""
    return _scalar("u^3 - 3u - lam", lambda u, l: u ** 3 - 3.0 * u - l,
                   lambda u, l: 3.0 * u * u - 3.0, lambda u, l: -1.0,
                   lambda_range=(-5.0, 5.0))
