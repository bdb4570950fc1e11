"""Pseudo-arclength continuation with fold detection, plus the reduced
Hamiltonian constraint ``psi'' + (2/r) psi' + 2 pi rho psi^a = 0`` as a
worked problem."""

from .continuation import (Branch, Classification, ContinuationSettings, CriticalPointReport,
                           Event, EventKind, Sign, classify_critical_point,
                           estimate_fold_coefficients, pseudo_arclength_step, refine_fold,
                           tangent, trace_branch)
from .errors import (FoldContError, InsufficientData, JacobianMismatch, NoConvergence,
                     NonFiniteError, SingularError)
from .linalg import (BorderedSystem, bordered_solve, lu_factor, lu_solve,
                     null_space_dimension, smallest_singular_pair)
from .problem import (ProblemDefinition, SolutionPoint, TangentVector, newton_correct,
                      validate_jacobians)

__all__ = [
    "Branch", "Classification", "ContinuationSettings", "CriticalPointReport", "Event",
    "EventKind", "Sign", "classify_critical_point", "estimate_fold_coefficients",
    "pseudo_arclength_step", "refine_fold", "tangent", "trace_branch",
    "FoldContError", "InsufficientData", "JacobianMismatch", "NoConvergence",
    "NonFiniteError", "SingularError",
    "BorderedSystem", "bordered_solve", "lu_factor", "lu_solve", "null_space_dimension",
    "smallest_singular_pair",
    "ProblemDefinition", "SolutionPoint", "TangentVector", "newton_correct",
    "validate_jacobians",
]
