"""Dense linear algebra used by the continuation engine.

Matrices are plain 2-D ``numpy`` float arrays; :func:`as_dense` is the single
place where shape and finiteness are checked.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularError

PIVOT_RTOL = 1e-14
MAX_INVERSE_SWEEPS = 100


def as_dense(A, square: bool = False) -> np.ndarray:
    """Return ``A`` as a finite 2-D float64 array, or raise ``ValueError``."""
    M = np.array(A, dtype=float, copy=True)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _as_vector(b, n: int, what: str = "vector") -> np.ndarray:
    v = np.array(b, dtype=float, copy=True).reshape(-1)
    if v.shape[0] != n:
        raise ValueError(f"{what} has length {v.shape[0]}, expected {n}")
    return v


def lu_factor(A):
    """Partial-pivoting LU of a square matrix.

    Raises SingularError when a pivot falls below ``PIVOT_RTOL`` times the
    largest entry magnitude of ``A``.
    """
    A = as_dense(A, square=True)
    scale = float(np.max(np.abs(A)))
    if scale == 0.0:
        raise SingularError("zero matrix")
    with warnings.catch_warnings():
        # getrf warns on an exactly zero pivot; that case is handled below.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    k = int(np.argmin(pivots))
    if pivots[k] < PIVOT_RTOL * scale:
        raise SingularError(f"pivot {pivots[k]:.3e} at position {k} below threshold")
    return lu, piv


def lu_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting."""
    A = as_dense(A, square=True)
    b = _as_vector(b, A.shape[0], "right-hand side")
    factors = lu_factor(A)
    return scipy.linalg.lu_solve(factors, b, check_finite=False)


@dataclass
class BorderedSystem:
    """The (N+1)x(N+1) matrix ``[[core, right], [bottom^T, corner]]``."""

    core: np.ndarray
    right_border: np.ndarray
    bottom_border: np.ndarray
    corner: float

    def __post_init__(self):
        self.core = as_dense(self.core, square=True)
        n = self.core.shape[0]
        self.right_border = _as_vector(self.right_border, n, "right border")
        self.bottom_border = _as_vector(self.bottom_border, n, "bottom border")
        self.corner = float(self.corner)
        if not (np.all(np.isfinite(self.right_border))
                and np.all(np.isfinite(self.bottom_border))
                and np.isfinite(self.corner)):
            raise ValueError("bordered system has non-finite entries")

    @property
    def n(self) -> int:
        return self.core.shape[0]

    def assemble(self) -> np.ndarray:
        n = self.n
        full = np.empty((n + 1, n + 1))
        full[:n, :n] = self.core
        full[:n, n] = self.right_border
        full[n, :n] = self.bottom_border
        full[n, n] = self.corner
        return full


def bordered_solve(system: BorderedSystem, rhs) -> np.ndarray:
    """Solve a bordered system by block elimination.

    Falls back to a one-shot LU of the assembled matrix when the core is
    singular or when block elimination loses accuracy (nearly singular core,
    e.g. at a fold).
    """
    n = system.n
    rhs = _as_vector(rhs, n + 1, "right-hand side")
    full = None
    try:
        factors = lu_factor(system.core)
    except SingularError:
        factors = None
    if factors is not None:
        f, g = rhs[:n], rhs[n]
        y = scipy.linalg.lu_solve(factors, f, check_finite=False)
        z = scipy.linalg.lu_solve(factors, system.right_border, check_finite=False)
        denom = system.corner - system.bottom_border @ z
        if denom != 0.0 and np.isfinite(denom):
            xn = (g - system.bottom_border @ y) / denom
            x = np.empty(n + 1)
            x[:n] = y - z * xn
            x[n] = xn
            full = system.assemble()
            err = np.max(np.abs(full @ x - rhs))
            tol = 1e-10 * (np.max(np.abs(full)) * np.max(np.abs(x)) + np.max(np.abs(rhs)))
            if np.all(np.isfinite(x)) and err <= tol:
                return x
    if full is None:
        full = system.assemble()
    return lu_solve(full, rhs)


def smallest_singular_pair(A) -> tuple[float, np.ndarray]:
    """Smallest singular value of a square matrix and its right singular vector.

    Inverse iteration on ``A^T A`` (reusing one LU of ``A``); falls back to a
    full SVD when ``A`` is numerically singular or the iteration stagnates.
    """
    A = as_dense(A, square=True)
    n = A.shape[0]
    try:
        factors = lu_factor(A)
    except SingularError:
        return _svd_smallest(A)
    # Fixed pseudo-random start: a symmetric start vector such as ones(n) can
    # be exactly orthogonal to the wanted singular vector.
    x = np.random.default_rng(12345).standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(MAX_INVERSE_SWEEPS):
        w = scipy.linalg.lu_solve(factors, x, trans=1, check_finite=False)
        y = scipy.linalg.lu_solve(factors, w, check_finite=False)
        norm = np.linalg.norm(y)
        if not np.isfinite(norm) or norm == 0.0:
            return _svd_smallest(A)
        y /= norm
        if y @ x < 0:
            y = -y
        change = np.linalg.norm(y - x)
        x = y
        if change < 1e-12:
            return float(np.linalg.norm(A @ x)), x
    return _svd_smallest(A)


def _svd_smallest(A: np.ndarray) -> tuple[float, np.ndarray]:
    _, s, vt = np.linalg.svd(A)
    v = vt[-1].copy()
    return float(s[-1]), v / np.linalg.norm(v)


def singular_values(A) -> np.ndarray:
    return np.linalg.svd(as_dense(A), compute_uv=False)


def null_space_dimension(A, rel_tol: float = 1e-6, scale: float | None = None) -> int:
    """Count singular values ``<= rel_tol * scale``.

    ``scale`` defaults to the largest singular value of ``A``. A zero matrix
    counts every direction as null.
    """
    A = as_dense(A, square=True)
    s = singular_values(A)
    if scale is None:
        scale = float(s[0])
    if scale == 0.0:
        return A.shape[0]
    return int(np.count_nonzero(s <= rel_tol * scale))
