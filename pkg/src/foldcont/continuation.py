"""Pseudo-arclength branch tracing with fold and branch-point handling.

The corrector solves the extended system

    F(u, lam) = 0
    (u - u0) . du0 + (lam - lam0) dlam0 - ds = 0

with Newton steps on the bordered Jacobian ``[[F_u, F_lam], [du0^T, dlam0]]``.
Folds are detected by a sign change of ``dlam`` between consecutive tangents;
simple branch points by a sign change of ``det([[F_u, F_lam], [du^T, dlam]])``.

Fold coefficient convention: arclength ``s`` is unit speed in the Euclidean
metric of ``(u, lam)``, and ``C2`` is the quadratic coefficient of
``lam(s) - lam_c`` measured with the orientation in which the fold is
approached with increasing ``lam``. A genuine quadratic fold therefore has
``C2 < 0`` regardless of which way the branch is traversed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientData, NoConvergence, NonFiniteError, SingularError
from .linalg import BorderedSystem, bordered_solve, null_space_dimension, smallest_singular_pair
from .problem import ProblemDefinition, SolutionPoint, TangentVector

NULL_RTOL = 1e-6
RANGE_THRESHOLD = 1e-4
FIT_POINTS_PER_SIDE = 5
# Relative residual below which the quadratic fold model is accepted.
FIT_ACCEPT = 0.01


class EventKind(str, enum.Enum):
    FOLD = "Fold"
    BRANCH_POINT = "BranchPoint"
    STEP_FAILURE = "StepFailure"
    PARAMETER_EXIT = "ParameterExit"


class Classification(str, enum.Enum):
    QUADRATIC_FOLD = "QuadraticFold"
    HIGHER_ORDER_FOLD = "HigherOrderFold"
    SIMPLE_BRANCH_POINT = "SimpleBranchPoint"
    HIGHER_SINGULARITY = "HigherSingularity"


class Sign(str, enum.Enum):
    NEGATIVE = "negative"
    ZERO = "zero"
    POSITIVE = "positive"


@dataclass
class ContinuationSettings:
    ds0: float = 0.01
    ds_min: float = 1e-6
    ds_max: float = 0.1
    newton_tol: float = 1e-10
    newton_max_iter: int = 20
    max_steps: int = 2000
    lambda_stop: tuple[float, float] = (-math.inf, math.inf)
    fold_tol: float = 1e-8
    measure_max: float = math.inf
    # +1: start towards increasing lam, -1: towards decreasing lam.
    direction: int = 1
    # A step converging in at most this many Newton iterations doubles ds.
    fast_iterations: int = 4
    # Reject a step whose tangent turns by more than this (cosine); guards
    # against jumping between nearby branches.
    min_tangent_cosine: float = 0.5
    detect_branch_points: bool = True

    def __post_init__(self):
        if not (0.0 < self.ds_min <= self.ds0 <= self.ds_max):
            raise ValueError("need 0 < ds_min <= ds0 <= ds_max, got "
                             f"{self.ds_min!r}, {self.ds0!r}, {self.ds_max!r}")
        if self.newton_tol <= 0.0 or self.fold_tol <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.newton_max_iter < 1 or self.max_steps < 1:
            raise ValueError("newton_max_iter and max_steps must be >= 1")
        lo, hi = self.lambda_stop
        if not lo < hi:
            raise ValueError(f"empty lambda window {self.lambda_stop!r}")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")


@dataclass
class CriticalPointReport:
    null_dim: int
    range_test_residual: float
    null_vector: np.ndarray
    c2_sign: Sign
    c2_estimate: float
    fold_order: int
    classification: Classification
    c1_proxy: float = math.nan
    c2_fit_residual: float = math.nan
    sigma_min: float = math.nan
    bordered_condition: float = math.nan


@dataclass(eq=False)
class Event:
    kind: EventKind
    location: SolutionPoint
    report: CriticalPointReport | None = None
    # Index of the branch point at (or just before) the event.
    index: int = 0
    tangent: TangentVector | None = None
    detail: str = ""


@dataclass(eq=False)
class Branch:
    points: list[SolutionPoint] = field(default_factory=list)
    tangents: list[TangentVector] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    def folds(self) -> list[Event]:
        return [e for e in self.events if e.kind is EventKind.FOLD]

    def branch_points(self) -> list[Event]:
        return [e for e in self.events if e.kind is EventKind.BRANCH_POINT]

    def arclength(self) -> np.ndarray:
        """Cumulative chord length along the stored points."""
        if not self.points:
            return np.zeros(0)
        X = np.array([p.x() for p in self.points])
        steps = np.linalg.norm(np.diff(X, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])


# --- tangent --------------------------------------------------------------

def _null_direction(J: np.ndarray, f: np.ndarray) -> np.ndarray:
    A = np.column_stack([J, f])
    _, s, vt = np.linalg.svd(A, full_matrices=True)
    scale = max(1.0, float(s[0]))
    if s[-1] <= NULL_RTOL * scale:
        raise SingularError("[F_u, F_lam] is rank deficient: null space of dimension >= 2")
    return vt[-1]


def tangent(problem: ProblemDefinition, at: SolutionPoint,
            prev: TangentVector | None = None, direction: int = 1) -> TangentVector:
    """Unit tangent to the branch through ``at``.

    Oriented along ``prev`` when given, otherwise towards ``direction * lam``.
    """
    J = problem.F_u(at.u, at.lam)
    f = problem.F_lambda(at.u, at.lam)
    n = problem.state_dim
    if prev is not None:
        border, corner = prev.du, prev.dlam
    else:
        border, corner = np.zeros(n), 1.0
    rhs = np.zeros(n + 1)
    rhs[n] = 1.0
    try:
        z = bordered_solve(BorderedSystem(J, f, border, corner), rhs)
    except SingularError:
        z = _null_direction(J, f)
    z = z / np.linalg.norm(z)
    if prev is not None:
        if z @ prev.as_array() < 0:
            z = -z
    elif abs(z[n]) > 1e-14:
        if direction * z[n] < 0:
            z = -z
    elif z[int(np.argmax(np.abs(z[:n])))] < 0:
        z = -z
    return TangentVector(z[:n], z[n])


def _bordered_matrix(problem, pt, t):
    return BorderedSystem(problem.F_u(pt.u, pt.lam), problem.F_lambda(pt.u, pt.lam),
                          t.du, t.dlam).assemble()


def _det_sign(problem, pt, t) -> float:
    sign, _ = np.linalg.slogdet(_bordered_matrix(problem, pt, t))
    return float(sign)


# --- corrector ------------------------------------------------------------

def pseudo_arclength_step(problem: ProblemDefinition, start: SolutionPoint, t: TangentVector,
                          ds: float, settings: ContinuationSettings) -> SolutionPoint:
    """Predict along ``t`` by ``ds`` and correct on the extended system."""
    u0, lam0 = start.u, start.lam
    u = u0 + ds * t.du
    lam = lam0 + ds * t.dlam
    tol = settings.newton_tol
    for it in range(settings.newton_max_iter + 1):
        try:
            F = problem.F(u, lam)
        except NonFiniteError as exc:
            raise NoConvergence(str(exc), u=u, lam=lam, iterations=it) from exc
        g = float(t.du @ (u - u0) + t.dlam * (lam - lam0) - ds)
        rnorm = float(np.max(np.abs(F)))
        if max(rnorm, abs(g)) <= tol:
            return SolutionPoint(u, lam, rnorm, problem.measure(u, lam),
                                 iterations=it, arclength_residual=abs(g))
        if it == settings.newton_max_iter:
            break
        system = BorderedSystem(problem.F_u(u, lam), problem.F_lambda(u, lam), t.du, t.dlam)
        delta = bordered_solve(system, -np.append(F, g))
        u = u + delta[:-1]
        lam = lam + float(delta[-1])
    raise NoConvergence(f"pseudo-arclength corrector failed (ds={ds:.3e}, |F|={rnorm:.3e})",
                        u=u, lam=lam, residual_norm=rnorm, iterations=settings.newton_max_iter)


# --- refinement -----------------------------------------------------------

def _bracket_length(a: SolutionPoint, b: SolutionPoint, ta: TangentVector) -> float:
    return float((b.x() - a.x()) @ ta.as_array())


def _refine_fold(problem, a, ta, b, settings):
    s_hi = _bracket_length(a, b, ta)

    def probe(s):
        pt = pseudo_arclength_step(problem, a, ta, s, settings)
        tt = tangent(problem, pt, prev=ta)
        return pt, tt

    lo, g_lo = 0.0, ta.dlam
    b2, tb2 = probe(s_hi)
    hi, g_hi = s_hi, tb2.dlam
    best = (abs(g_hi), b2, tb2, hi)
    if abs(ta.dlam) < best[0]:
        best = (abs(ta.dlam), a, ta, 0.0)
    if best[0] <= settings.fold_tol:
        return best[1], best[2], best[3]
    if g_lo * g_hi > 0:
        raise NoConvergence("fold bracket lost its sign change")
    side = 0
    g = g_hi
    for _ in range(100):
        s = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
        if not lo < s < hi:
            s = 0.5 * (lo + hi)
        pt, tt = probe(s)
        g = tt.dlam
        if abs(g) <= settings.fold_tol:
            return pt, tt, s
        # Illinois variant of regula falsi: halve the stale end's value.
        if g * g_lo > 0:
            lo, g_lo = s, g
            if side == -1:
                g_hi *= 0.5
            side = -1
        else:
            hi, g_hi = s, g
            if side == 1:
                g_lo *= 0.5
            side = 1
        if hi - lo <= 1e-15 * max(1.0, s_hi):
            break
    raise NoConvergence(f"fold refinement stalled with |dlam| = {abs(g):.3e}")


def refine_fold(problem: ProblemDefinition, bracket: tuple[SolutionPoint, SolutionPoint],
                settings: ContinuationSettings,
                tangents: tuple[TangentVector, TangentVector] | None = None) -> SolutionPoint:
    """Locate the fold between two points whose tangents have opposite ``dlam``.

    Bracketed secant search on the arclength measured from the first point,
    stopping once ``|dlam| <= settings.fold_tol``.
    """
    a, b = bracket
    if tangents is None:
        ta = tangent(problem, a, direction=settings.direction)
        if _bracket_length(a, b, ta) < 0:
            ta = -ta
    else:
        ta = tangents[0]
    return _refine_fold(problem, a, ta, b, settings)[0]


def _refine_branch_point(problem, a, ta, b, settings):
    s_hi = _bracket_length(a, b, ta)
    sign_lo = _det_sign(problem, a, ta)
    lo, hi = 0.0, s_hi
    pt, tt = b, None
    for _ in range(60):
        if hi - lo <= 1e-10 * max(1.0, s_hi):
            break
        s = 0.5 * (lo + hi)
        pt = pseudo_arclength_step(problem, a, ta, s, settings)
        try:
            tt = tangent(problem, pt, prev=ta)
        except SingularError:
            return pt, None
        if _det_sign(problem, pt, tt) == sign_lo:
            lo = s
        else:
            hi = s
    return pt, tt


# --- tracing --------------------------------------------------------------

def trace_branch(problem: ProblemDefinition, start: SolutionPoint,
                 settings: ContinuationSettings | None = None) -> Branch:
    """Follow the branch through ``start`` until it leaves the window or fails.

    Failures never raise; they end the trace with a StepFailure event.
    """
    settings = settings or ContinuationSettings()
    branch = Branch()
    t = tangent(problem, start, direction=settings.direction)
    branch.points.append(start)
    branch.tangents.append(t)
    det_sign = _det_sign(problem, start, t) if settings.detect_branch_points else 0.0
    ds = settings.ds0
    lo, hi = settings.lambda_stop
    steps = 0
    while steps < settings.max_steps:
        prev, t_prev = branch.points[-1], branch.tangents[-1]
        try:
            new = pseudo_arclength_step(problem, prev, t_prev, ds, settings)
            t_new = tangent(problem, new, prev=t_prev)
            if t_new.dot(t_prev) < settings.min_tangent_cosine:
                raise NoConvergence("tangent turned too sharply")
        except (NoConvergence, SingularError, NonFiniteError) as exc:
            ds *= 0.5
            if ds < settings.ds_min:
                branch.events.append(Event(EventKind.STEP_FAILURE, prev,
                                           index=len(branch.points) - 1, tangent=t_prev,
                                           detail=str(exc)))
                break
            continue
        steps += 1
        idx = len(branch.points) - 1
        if t_prev.dlam * t_new.dlam < 0:
            branch.events.append(_fold_event(problem, prev, t_prev, new, t_new, idx, settings))
        if settings.detect_branch_points:
            sign = _det_sign(problem, new, t_new)
            if sign != det_sign and t_new.dlam != 0.0:
                branch.events.append(_branch_point_event(problem, prev, t_prev, new, idx, settings))
            det_sign = sign
        branch.points.append(new)
        branch.tangents.append(t_new)
        if new.iterations <= settings.fast_iterations:
            ds = min(2.0 * ds, settings.ds_max)
        if not lo <= new.lam <= hi:
            branch.events.append(Event(EventKind.PARAMETER_EXIT, new, index=idx + 1,
                                       tangent=t_new, detail="lambda window"))
            break
        if abs(new.measure) > settings.measure_max:
            branch.events.append(Event(EventKind.PARAMETER_EXIT, new, index=idx + 1,
                                       tangent=t_new, detail="measure bound"))
            break
    for event in branch.events:
        if event.kind in (EventKind.FOLD, EventKind.BRANCH_POINT) and event.report is None:
            event.report = classify_critical_point(problem, event.location, settings=settings,
                                                   branch=branch, event=event)
    return branch


def _fold_event(problem, a, ta, b, tb, idx, settings):
    try:
        pt, tt, _ = _refine_fold(problem, a, ta, b, settings)
        detail = ""
    except (NoConvergence, SingularError, NonFiniteError) as exc:
        pt, tt = (a, ta) if abs(ta.dlam) < abs(tb.dlam) else (b, tb)
        detail = f"unrefined: {exc}"
    return Event(EventKind.FOLD, pt, index=idx, tangent=tt, detail=detail)


def _branch_point_event(problem, a, ta, b, idx, settings):
    try:
        pt, tt = _refine_branch_point(problem, a, ta, b, settings)
        detail = ""
    except (NoConvergence, SingularError, NonFiniteError) as exc:
        pt, tt = b, None
        detail = f"unrefined: {exc}"
    return Event(EventKind.BRANCH_POINT, pt, index=idx, tangent=tt, detail=detail)


# --- classification -------------------------------------------------------

def _fit_fold(s, lam, U, s_c, lam_c, u_c, phi, approach_sign):
    """Quadratic fits of lam(s) and of the phi-orthogonal part of u(s)."""
    sigma = np.asarray(s) - s_c
    V = np.column_stack([np.ones_like(sigma), sigma, sigma ** 2])
    coef, *_ = np.linalg.lstsq(V, lam, rcond=None)
    fitted = V @ coef
    spread = float(np.linalg.norm(lam - lam_c))
    fit_residual = float(np.linalg.norm(lam - fitted)) / spread if spread > 0 else math.inf
    c2 = float(coef[2]) * approach_sign
    dU = U - u_c
    dU = dU - np.outer(dU @ phi, phi)
    ucoef, *_ = np.linalg.lstsq(V, dU, rcond=None)
    c1 = float(np.linalg.norm(ucoef[2]))
    V3 = np.column_stack([V, sigma ** 3])
    coef3, *_ = np.linalg.lstsq(V3, lam, rcond=None)
    return c1, c2, fit_residual, float(coef3[3]) * approach_sign


def _fold_samples_from_branch(branch: Branch, event: Event):
    points = branch.points
    k = event.index
    before = points[max(0, k - FIT_POINTS_PER_SIDE + 1):k + 1]
    after = points[k + 1:k + 1 + FIT_POINTS_PER_SIDE]
    if len(before) < FIT_POINTS_PER_SIDE or len(after) < FIT_POINTS_PER_SIDE:
        raise InsufficientData(f"need {FIT_POINTS_PER_SIDE} points on each side of the fold, "
                               f"have {len(before)} and {len(after)}")
    s_all = branch.arclength()
    s_c = s_all[k] + float(np.linalg.norm(event.location.x() - points[k].x()))
    pts = before + [event.location] + after
    s = np.concatenate([s_all[k + 1 - len(before):k + 1], [s_c], s_all[k + 1:k + 1 + len(after)]])
    approach = branch.tangents[k].dlam
    return pts, s, s_c, (1.0 if approach > 0 else -1.0)


def _fold_samples_local(problem, at, t, h, settings):
    pts, s = [at], [0.0]
    for sgn in (1.0, -1.0):
        tt = t if sgn > 0 else -t
        for k in range(1, FIT_POINTS_PER_SIDE + 1):
            pts.append(pseudo_arclength_step(problem, at, tt, k * h, settings))
            s.append(sgn * k * h)
    # With no traversal history, orient so the fold is approached with increasing lam.
    return pts, np.array(s), 0.0, None


def estimate_fold_coefficients(branch: Branch, fold_index: int = 0) -> tuple[float, float]:
    """Return ``(C1_proxy, C2)`` for the ``fold_index``-th fold of ``branch``."""
    folds = branch.folds()
    if not 0 <= fold_index < len(folds):
        raise InsufficientData(f"branch has {len(folds)} folds")
    event = folds[fold_index]
    pts, s, s_c, approach = _fold_samples_from_branch(branch, event)
    phi = _fold_null_direction(event)
    c1, c2, _, _ = _fit_fold(s, np.array([p.lam for p in pts]), np.array([p.u for p in pts]),
                             s_c, event.location.lam, event.location.u, phi, approach)
    return c1, c2


def _fold_null_direction(event: Event) -> np.ndarray:
    if event.report is not None:
        return event.report.null_vector
    du = event.tangent.du if event.tangent is not None else np.ones_like(event.location.u)
    return du / np.linalg.norm(du)


def _range_residual(J: np.ndarray, f: np.ndarray, null_dim: int, scale: float) -> float:
    fnorm = float(np.linalg.norm(f))
    # A numerically vanishing F_lam lies in every range.
    if null_dim == 0 or fnorm <= NULL_RTOL * scale:
        return 0.0
    # Rows are equilibrated first (range membership is invariant under row
    # scaling, the distance is not): a discretized operator mixes O(1)
    # boundary rows with O(1/h^2) interior rows. The residual is the
    # component of f along the left singular vectors spanning the numerical
    # cokernel of the rank-truncated F_u.
    rowmax = np.max(np.abs(np.column_stack([J, f])), axis=1)
    d = 1.0 / np.where(rowmax > 0.0, rowmax, 1.0)
    Js, fs = J * d[:, None], f * d
    U, _, _ = np.linalg.svd(Js)
    return float(np.linalg.norm(U[:, -null_dim:].T @ fs)) / float(np.linalg.norm(fs))


def classify_critical_point(problem: ProblemDefinition, at: SolutionPoint,
                            settings: ContinuationSettings | None = None,
                            branch: Branch | None = None, event: Event | None = None,
                            sample_ds: float | None = None) -> CriticalPointReport:
    """Classify a refined singular point of the branch.

    Null-space dimension and range test come from singular values of ``F_u``;
    ``C2`` from a quadratic fit of ``lam`` against arclength, using the stored
    branch when it has enough points around the event, otherwise a fresh local
    sample of the branch through ``at``.
    """
    settings = settings or ContinuationSettings()
    J = problem.F_u(at.u, at.lam)
    f = problem.F_lambda(at.u, at.lam)
    full = np.column_stack([J, f])
    scale = max(1.0, float(np.linalg.svd(full, compute_uv=False)[0]))
    null_dim = null_space_dimension(J, NULL_RTOL, scale=scale)
    sigma, phi = smallest_singular_pair(J)
    rr = _range_residual(J, f, null_dim, scale)
    in_range = rr <= RANGE_THRESHOLD

    report = CriticalPointReport(null_dim=null_dim, range_test_residual=rr, null_vector=phi,
                                 c2_sign=Sign.ZERO, c2_estimate=math.nan, fold_order=0,
                                 classification=Classification.HIGHER_SINGULARITY,
                                 sigma_min=sigma)
    if (null_dim == 1 and in_range) or (null_dim == 2 and not in_range):
        report.classification = Classification.SIMPLE_BRANCH_POINT
        return report
    if null_dim != 1:
        return report

    t_at = event.tangent if event is not None and event.tangent is not None else None
    approach = None
    if branch is not None and event is not None:
        approach = 1.0 if branch.tangents[event.index].dlam > 0 else -1.0
    lam_c, u_c = at.lam, at.u
    try:
        if t_at is None:
            t_at = tangent(problem, at, direction=settings.direction)
        report.bordered_condition = float(np.linalg.cond(_bordered_matrix(problem, at, t_at)))
        fit = None
        h = sample_ds if sample_ds is not None else settings.ds0
        if branch is not None and event is not None:
            try:
                pts, s, s_c, _ = _fold_samples_from_branch(branch, event)
                fit = _fit_fold(s, np.array([p.lam for p in pts]), np.array([p.u for p in pts]),
                                s_c, lam_c, u_c, phi, approach)
                h = 0.5 * float(np.median(np.abs(np.diff(s))))
            except InsufficientData:
                fit = None
        # Branch points too coarse for the quadratic model: resample the
        # branch locally with shrinking spacing until the model resolves it.
        for _ in range(16):
            if fit is not None and fit[2] <= FIT_ACCEPT:
                break
            pts, s, s_c, _ = _fold_samples_local(problem, at, t_at, h, settings)
            fit = _fit_fold(s, np.array([p.lam for p in pts]), np.array([p.u for p in pts]),
                            s_c, lam_c, u_c, phi, approach if approach is not None else 1.0)
            spread = abs(fit[1]) * (FIT_POINTS_PER_SIDE * h) ** 2
            if spread < 1e4 * settings.newton_tol:
                break
            h *= 0.5
    except (NoConvergence, SingularError, NonFiniteError):
        return report
    c1, c2, fit_res, c3 = fit
    if approach is None:
        c2 = -abs(c2)
    report.c1_proxy = c1
    report.c2_estimate = c2
    report.c2_fit_residual = fit_res
    thr = 1e-6 * max(1.0, abs(at.lam))
    if abs(c2) > thr:
        report.c2_sign = Sign.NEGATIVE if c2 < 0 else Sign.POSITIVE
        report.fold_order = 2
        report.classification = Classification.QUADRATIC_FOLD
    else:
        report.fold_order = 3 if abs(c3) > thr else 0
        report.classification = (Classification.HIGHER_ORDER_FOLD if report.fold_order
                                 else Classification.HIGHER_SINGULARITY)
    return report
