"""Exception types shared across the package."""


class FoldContError(Exception):
    """Base class for all errors raised by foldcont."""


class SingularError(FoldContError):
    """A linear system could not be solved because its matrix is singular."""


class NonFiniteError(FoldContError):
    """A residual or integration produced NaN/Inf or left the admissible domain."""


class NoConvergence(FoldContError):
    """Newton iteration (or a refinement loop) failed to meet its tolerance.

    Carries the last iterate so callers can inspect how far it got.
    """

    def __init__(self, message, u=None, lam=None, residual_norm=float("nan"), iterations=0):
        super().__init__(message)
        self.u = u
        self.lam = lam
        self.residual_norm = residual_norm
        self.iterations = iterations


class InsufficientData(FoldContError):
    """Not enough branch points around a critical point to fit coefficients."""


class JacobianMismatch(FoldContError):
    """An analytic Jacobian disagrees with finite differences of the residual."""
