"""Command-line scenario runner: ``foldcont {trace,compare,plot,verify}``.

Settings come from built-in defaults, then an optional flat ``key=value``
file (``--config``), then command-line flags, later sources winning.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import artifacts
from .artifacts import MalformedArtifact, fmt
from .continuation import Branch, ContinuationSettings, EventKind, trace_branch
from .errors import FoldContError
from .hamiltonian import (HamiltonianConfig, RadialMesh, fd_problem, linear_closed_form,
                          shoot, shoot_profile, shooting_problem)
from .problem import SolutionPoint, newton_correct

log = logging.getLogger("foldcont")

EXIT_OK, EXIT_RUN_FAILURE, EXIT_CONFIG = 0, 1, 2

# Step sizes are measured in the Euclidean norm of (u, rho); the FD state has
# M + 1 components of size psi, so its natural step is roughly sqrt(M) larger.
# FD residual rows carry 1/h^2, which puts their roundoff floor near 1e-10 at
# M = 200 and growing like M^2; see fd_newton_tol.
PROBLEM_DEFAULTS = {
    "shooting": {"ds0": 0.01, "ds_max": 0.2, "newton_tol": 1e-10},
    "fd": {"ds0": 0.1, "ds_max": 0.5, "newton_tol": 1e-8},
}

SUMMARY_HEADER = ["exponent", "problem", "points", "folds", "first_fold_lambda",
                  "first_fold_measure", "terminal_event", "status"]
COMPARE_HEADER = ["exponent", "rho_c_shooting", "rho_c_fd", "rho_c_diff", "profile_rho",
                  "solutions_shooting", "solutions_fd", "profile_diff",
                  "closed_form_err_shooting", "closed_form_err_fd", "status"]


def _float_list(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _problem(text: str) -> str:
    if text not in PROBLEM_DEFAULTS:
        raise ValueError(f"problem must be one of {sorted(PROBLEM_DEFAULTS)}, got {text!r}")
    return text


# key -> (converter, RunConfig field)
KEYS = {
    "problem": (_problem, "problem"),
    "exponent": (_float_list, "exponents"),
    "mesh": (int, "mesh_M"),
    "rk_steps": (int, "rk_steps"),
    "ds0": (float, "ds0"),
    "ds_min": (float, "ds_min"),
    "ds_max": (float, "ds_max"),
    "newton_tol": (float, "newton_tol"),
    "lambda_min": (float, "lambda_min"),
    "lambda_max": (float, "lambda_max"),
    "measure_max": (float, "measure_max"),
    "max_steps": (int, "max_steps"),
    "profile_rho": (_float_list, "profile_rhos"),
    "out": (str, "output_dir"),
    "svg": (_bool, "emit_svg"),
    "jobs": (int, "jobs"),
    "tolerance": (float, "tolerance"),
}


@dataclass(frozen=True)
class RunConfig:
    problem: str = "shooting"
    exponents: tuple[float, ...] = (1.0, 1.25, 5.0, 10.0)
    mesh_M: int = 200
    rk_steps: int = 1024
    ds0: float = 0.01
    ds_min: float = 1e-6
    ds_max: float = 0.2
    newton_tol: float = 1e-10
    lambda_min: float = -0.05
    lambda_max: float = 1.4
    # Blow-up guard on psi(0); the upper branches run off to infinity as rho -> 0.
    measure_max: float = 20.0
    max_steps: int = 2000
    profile_rhos: tuple[float, ...] = ()
    output_dir: str = "foldcont-out"
    emit_svg: bool = False
    jobs: int = 1
    tolerance: float = 2e-3

    def __post_init__(self):
        _problem(self.problem)
        if not self.exponents:
            raise ValueError("exponent list is empty")
        for a in self.exponents:
            self.hamiltonian(a)
        self.settings()
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if not all(math.isfinite(r) for r in self.profile_rhos):
            raise ValueError("profile rho values must be finite")
        if not self.measure_max > 1.0:
            raise ValueError("measure_max must exceed the start value psi(0) = 1")

    def hamiltonian(self, exponent: float) -> HamiltonianConfig:
        return HamiltonianConfig(exponent=float(exponent), mesh_M=self.mesh_M,
                                 rk_steps=self.rk_steps,
                                 rho_range=(self.lambda_min, self.lambda_max))

    def settings(self) -> ContinuationSettings:
        return ContinuationSettings(ds0=self.ds0, ds_min=self.ds_min, ds_max=self.ds_max,
                                    newton_tol=self.newton_tol, max_steps=self.max_steps,
                                    lambda_stop=(self.lambda_min, self.lambda_max),
                                    measure_max=self.measure_max)

    def run_file(self, exponent: float) -> dict[str, str]:
        """The ``key=value`` record written next to each run's CSVs."""
        return {
            "problem": self.problem, "exponent": repr(float(exponent)),
            "mesh": str(self.mesh_M), "rk_steps": str(self.rk_steps),
            "ds0": repr(self.ds0), "ds_min": repr(self.ds_min), "ds_max": repr(self.ds_max),
            "newton_tol": repr(self.newton_tol), "lambda_min": repr(self.lambda_min),
            "lambda_max": repr(self.lambda_max), "measure_max": repr(self.measure_max),
            "max_steps": str(self.max_steps),
            "profile_rho": ",".join(repr(r) for r in self.profile_rhos),
        }


def fd_newton_tol(mesh_M: int) -> float:
    return 1e-8 * max(1.0, (mesh_M / 200.0) ** 2)


def resolve_config(values: dict, problem: str | None = None) -> RunConfig:
    """Build a RunConfig from raw ``key -> value`` pairs (strings or typed).

    Step-size and tolerance keys that are absent take the defaults of the
    chosen problem.
    """
    kwargs = {}
    for key, value in values.items():
        if key not in KEYS:
            raise ValueError(f"unknown setting {key!r}")
        if value is None or (key == "profile_rho" and value == ""):
            continue
        conv, name = KEYS[key]
        kwargs[name] = conv(value) if isinstance(value, str) else value
    if problem is not None:
        kwargs["problem"] = problem
    chosen = kwargs.get("problem", RunConfig.problem)
    for key, value in PROBLEM_DEFAULTS[_problem(chosen)].items():
        kwargs.setdefault(KEYS[key][1], value)
    if chosen == "fd" and "newton_tol" not in values:
        kwargs["newton_tol"] = fd_newton_tol(kwargs.get("mesh_M", RunConfig.mesh_M))
    if "exponents" in kwargs:
        kwargs["exponents"] = tuple(float(a) for a in np.atleast_1d(kwargs["exponents"]))
    if "profile_rhos" in kwargs:
        kwargs["profile_rhos"] = tuple(float(r) for r in np.atleast_1d(kwargs["profile_rhos"]))
    return RunConfig(**kwargs)


# --- running --------------------------------------------------------------

def build_problem(cfg: RunConfig, exponent: float):
    h = cfg.hamiltonian(exponent)
    return shooting_problem(h) if cfg.problem == "shooting" else fd_problem(h)


def start_point(cfg: RunConfig, problem) -> SolutionPoint:
    """psi = 1, rho = 0: the exact solution every trace is anchored to."""
    n = 1 if cfg.problem == "shooting" else cfg.mesh_M + 1
    return SolutionPoint.at(problem, np.ones(n), 0.0)


def trace_exponent(cfg: RunConfig, exponent: float):
    problem = build_problem(cfg, exponent)
    branch = trace_branch(problem, start_point(cfg, problem), cfg.settings())
    return problem, branch


def solutions_at(problem, branch: Branch, rho: float, tol: float) -> list[SolutionPoint]:
    """Distinct solutions at ``rho`` found where the traced branch crosses it.

    Each crossing is interpolated between neighbouring branch points and
    corrected by Newton at fixed ``rho``; results are sorted by measure.
    """
    found: list[SolutionPoint] = []
    pts = branch.points
    for p0, p1 in zip(pts, pts[1:]):
        d0, d1 = p0.lam - rho, p1.lam - rho
        if d0 == 0.0:
            guess = p0.u
        elif d0 * d1 < 0.0:
            w = d0 / (d0 - d1)
            guess = (1.0 - w) * p0.u + w * p1.u
        else:
            continue
        try:
            sol = newton_correct(problem, guess, rho, tol=tol)
        except FoldContError as exc:
            log.warning("%s: no solution recovered near rho=%g: %s", problem.name, rho, exc)
            continue
        if all(abs(sol.measure - s.measure) > 1e-6 * max(1.0, abs(s.measure)) for s in found):
            found.append(sol)
    return sorted(found, key=lambda s: s.measure)


def profile_of(cfg: RunConfig, exponent: float, sol: SolutionPoint) -> tuple[np.ndarray, np.ndarray]:
    if cfg.problem == "shooting":
        return shoot_profile(sol.u[0], sol.lam, cfg.hamiltonian(exponent))
    return RadialMesh(cfg.mesh_M).nodes, sol.u.copy()


def run_dir(cfg: RunConfig, exponent: float) -> Path:
    return Path(cfg.output_dir) / f"{cfg.problem}_a{exponent:g}"


def _l2(problem):
    return lambda pt: problem.measures["l2"](pt.u, pt.lam)


def run_single(cfg: RunConfig, exponent: float) -> dict:
    """Trace one exponent and write its per-run directory; returns a summary row."""
    problem, branch = trace_exponent(cfg, exponent)
    out = run_dir(cfg, exponent)
    out.mkdir(parents=True, exist_ok=True)
    artifacts.write_branch_csv(out / "branch.csv", branch, _l2(problem))
    artifacts.write_events_csv(out / "events.csv", branch)
    artifacts.write_keyvalue(out / "run.cfg", cfg.run_file(exponent))
    for old in out.glob("profile_rho*.csv"):
        old.unlink()
    for rho in cfg.profile_rhos:
        for k, sol in enumerate(solutions_at(problem, branch, rho, cfg.newton_tol), start=1):
            r, psi = profile_of(cfg, exponent, sol)
            artifacts.write_profile_csv(out / f"profile_rho{rho:g}_{k}.csv", r, psi)
    folds = branch.folds()
    failed = any(e.kind is EventKind.STEP_FAILURE for e in branch.events)
    last = branch.events[-1] if branch.events else None
    terminal = "max_steps" if last is None or last.kind in (EventKind.FOLD, EventKind.BRANCH_POINT) \
        else (last.kind.value + (f" ({last.detail})" if last.kind is EventKind.PARAMETER_EXIT else ""))
    return {
        "exponent": float(exponent), "problem": cfg.problem, "points": len(branch.points),
        "folds": len(folds),
        "first_fold_lambda": folds[0].location.lam if folds else math.nan,
        "first_fold_measure": folds[0].location.measure if folds else math.nan,
        "terminal_event": terminal, "status": "failed" if failed else "ok",
    }


def run_trace(cfg: RunConfig) -> int:
    if cfg.jobs > 1 and len(cfg.exponents) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(cfg.exponents))) as pool:
            rows = list(pool.map(run_single, [cfg] * len(cfg.exponents), cfg.exponents))
    else:
        rows = [run_single(cfg, a) for a in cfg.exponents]
    rows.sort(key=lambda r: r["exponent"])
    out = Path(cfg.output_dir)
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(SUMMARY_HEADER) + "\n")
        for r in rows:
            fh.write(",".join(fmt(r[k]) if isinstance(r[k], (int, float)) else str(r[k])
                              for k in SUMMARY_HEADER) + "\n")
    for r in rows:
        fold = f"first fold rho={r['first_fold_lambda']:.10g}" if r["folds"] else "no fold"
        print(f"{r['problem']} a={r['exponent']:g}: {r['points']} points, {r['folds']} folds, "
              f"{fold}, end: {r['terminal_event']} [{r['status']}]")
    if cfg.emit_svg:
        render_plots(out)
    return EXIT_RUN_FAILURE if any(r["status"] != "ok" for r in rows) else EXIT_OK


# --- compare --------------------------------------------------------------

def _max_profile_diff(shoot_cfg, fd_cfg, exponent, s_sol, f_sol) -> float:
    r_fd, psi_fd = profile_of(fd_cfg, exponent, f_sol)
    r_sh, psi_sh = profile_of(shoot_cfg, exponent, s_sol)
    return float(np.max(np.abs(np.interp(r_fd, r_sh, psi_sh) - psi_fd)))


def _closed_form_err(cfg, exponent, sol) -> float:
    r, psi = profile_of(cfg, exponent, sol)
    return float(np.max(np.abs(psi - linear_closed_form(r, sol.lam)[1])))


def compare_exponent(shoot_cfg: RunConfig, fd_cfg: RunConfig, exponent: float) -> list[dict]:
    s_prob, s_branch = trace_exponent(shoot_cfg, exponent)
    f_prob, f_branch = trace_exponent(fd_cfg, exponent)
    s_folds, f_folds = s_branch.folds(), f_branch.folds()
    rc_s = s_folds[0].location.lam if s_folds else math.nan
    rc_f = f_folds[0].location.lam if f_folds else math.nan
    tol = shoot_cfg.tolerance
    # Either both realizations see a first fold or neither does.
    fold_ok = (not s_folds and not f_folds) or abs(rc_s - rc_f) <= tol
    rhos = shoot_cfg.profile_rhos or ((0.5 * rc_s,) if s_folds else (0.3,))
    rows = []
    for rho in rhos:
        s_sols = solutions_at(s_prob, s_branch, rho, shoot_cfg.newton_tol)
        f_sols = solutions_at(f_prob, f_branch, rho, fd_cfg.newton_tol)
        ok = fold_ok and len(s_sols) == len(f_sols)
        diff = math.nan
        if s_sols and len(s_sols) == len(f_sols):
            diff = max(_max_profile_diff(shoot_cfg, fd_cfg, exponent, a, b)
                       for a, b in zip(s_sols, f_sols))
            ok = ok and diff <= tol
        err_s = err_f = math.nan
        if exponent == 1.0 and 0.0 < rho < 0.5 * math.pi:
            err_s = max((_closed_form_err(shoot_cfg, exponent, s) for s in s_sols), default=math.nan)
            err_f = max((_closed_form_err(fd_cfg, exponent, s) for s in f_sols), default=math.nan)
            ok = ok and err_s <= tol and err_f <= tol
        rows.append({
            "exponent": float(exponent), "rho_c_shooting": rc_s, "rho_c_fd": rc_f,
            "rho_c_diff": abs(rc_s - rc_f), "profile_rho": float(rho),
            "solutions_shooting": len(s_sols), "solutions_fd": len(f_sols),
            "profile_diff": diff, "closed_form_err_shooting": err_s,
            "closed_form_err_fd": err_f, "status": "ok" if ok else "FAIL",
        })
    return rows


def run_compare(values: dict) -> int:
    shoot_cfg = resolve_config(values, problem="shooting")
    fd_cfg = resolve_config(values, problem="fd")
    rows = []
    for a in sorted(shoot_cfg.exponents):
        rows.extend(compare_exponent(shoot_cfg, fd_cfg, a))
    out = Path(shoot_cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "compare.csv", "w") as fh:
        fh.write(",".join(COMPARE_HEADER) + "\n")
        for r in rows:
            fh.write(",".join(r[k] if isinstance(r[k], str) else fmt(r[k])
                              for k in COMPARE_HEADER) + "\n")
    for r in rows:
        print(f"a={r['exponent']:g} rho={r['profile_rho']:.6g}: |drho_c|={r['rho_c_diff']:.3e} "
              f"solutions {r['solutions_shooting']}/{r['solutions_fd']} "
              f"max|dpsi|={r['profile_diff']:.3e} [{r['status']}]")
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_RUN_FAILURE


# --- plot / verify --------------------------------------------------------

def find_runs(root: Path) -> list[Path]:
    root = Path(root)
    if (root / "branch.csv").exists():
        return [root]
    return sorted(p.parent for p in root.glob("*/branch.csv"))


def load_run(path: Path) -> RunConfig:
    try:
        return resolve_config(artifacts.read_keyvalue(path / "run.cfg"))
    except OSError as exc:
        raise MalformedArtifact(f"{path}: missing run.cfg ({exc})") from exc
    except ValueError as exc:
        raise MalformedArtifact(f"{path}/run.cfg: {exc}") from exc


def render_plots(root) -> list[Path]:
    """Write one overlay diagram per problem and one profile plot per run."""
    runs = find_runs(root)
    if not runs:
        raise MalformedArtifact(f"{root}: no run directories with branch.csv")
    from . import plotting

    groups: dict[str, list] = {}
    written = []
    for path in runs:
        cfg = load_run(path)
        cols = artifacts.read_branch_columns(path / "branch.csv")
        groups.setdefault(cfg.problem, []).append((cfg.exponents[0], cols))
        profiles = sorted(path.glob("profile_rho*.csv"))
        if profiles:
            data = [(p.stem.replace("profile_", ""), *artifacts.read_profile(p)) for p in profiles]
            fig = plotting.profile_figure(data, title=f"{cfg.problem}, a={cfg.exponents[0]:g}")
            written.append(plotting.write_svg(fig, path / "profiles.svg"))
    base = Path(root)
    for problem, entries in sorted(groups.items()):
        entries.sort(key=lambda e: e[0])
        series = [(a, c["lambda"], c["measure_center"]) for a, c in entries if len(c["lambda"])]
        fig = plotting.bifurcation_figure(series)
        written.append(plotting.write_svg(fig, base / f"bifurcation_{problem}.svg"))
    return written


def verify_runs(root) -> int:
    """Re-check every branch row against the stored Newton tolerance.

    Shooting rows are re-evaluated from ``(psi(0), rho)``; FD rows do not
    carry the full state, so only their stored residuals are checked.
    """
    runs = find_runs(root)
    if not runs:
        raise MalformedArtifact(f"{root}: no run directories with branch.csv")
    bad = 0
    for path in runs:
        cfg = load_run(path)
        cols = artifacts.read_branch_columns(path / "branch.csv")
        h = cfg.hamiltonian(cfg.exponents[0])
        worst = 0.0
        n_bad = 0
        for lam, p, stored in zip(cols["lambda"], cols["measure_center"], cols["residual_norm"]):
            value = abs(shoot(p, lam, h)[0]) if cfg.problem == "shooting" else stored
            worst = max(worst, value)
            if not value <= cfg.newton_tol:
                n_bad += 1
        mode = "re-evaluated" if cfg.problem == "shooting" else "stored"
        print(f"{path}: {len(cols['lambda'])} rows, max {mode} |F| = {worst:.3e} "
              f"(tol {cfg.newton_tol:.1e}) [{'ok' if n_bad == 0 else f'{n_bad} violations'}]")
        bad += n_bad
    return EXIT_OK if bad == 0 else EXIT_RUN_FAILURE


# --- entry point ----------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foldcont", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    def common(p, run=True):
        p.add_argument("--out", default=S, help="output directory")
        if not run:
            return
        p.add_argument("--config", default=None, help="key=value settings file")
        p.add_argument("--exponent", default=S, help="comma-separated exponents a")
        p.add_argument("--mesh", type=int, default=S, help="FD mesh intervals M")
        p.add_argument("--rk-steps", type=int, default=S, help="RK4 steps for shooting")
        p.add_argument("--ds0", type=float, default=S)
        p.add_argument("--ds-min", type=float, default=S)
        p.add_argument("--ds-max", type=float, default=S)
        p.add_argument("--newton-tol", type=float, default=S)
        p.add_argument("--lambda-min", type=float, default=S)
        p.add_argument("--lambda-max", type=float, default=S)
        p.add_argument("--measure-max", type=float, default=S, help="blow-up guard on psi(0)")
        p.add_argument("--max-steps", type=int, default=S)
        p.add_argument("--profile-rho", default=S, help="comma-separated rho values for profiles")
        p.add_argument("--svg", action="store_const", const=True, default=S, help="also write SVG plots")

    t = sub.add_parser("trace", help="trace branches for each exponent")
    common(t)
    t.add_argument("--problem", choices=sorted(PROBLEM_DEFAULTS), default=S)
    t.add_argument("--jobs", type=int, default=S, help="concurrent exponent runs")
    c = sub.add_parser("compare", help="cross-check shooting against finite differences")
    common(c)
    c.add_argument("--tolerance", type=float, default=S)
    p = sub.add_parser("plot", help="render SVGs from existing CSVs")
    common(p, run=False)
    p.add_argument("path", nargs="?", default=None)
    v = sub.add_parser("verify", help="re-check residuals of stored branch rows")
    common(v, run=False)
    v.add_argument("path", nargs="?", default=None)
    return parser


def _gather(ns: argparse.Namespace) -> dict:
    values: dict = {}
    if getattr(ns, "config", None):
        try:
            values.update(artifacts.read_keyvalue(ns.config))
        except OSError as exc:
            raise ValueError(f"cannot read config {ns.config}: {exc}") from exc
    for key in KEYS:
        if key in vars(ns):
            values[key] = getattr(ns, key)
    return values


def main(argv=None) -> int:
    parser = _parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command in ("plot", "verify"):
            root = Path(ns.path or getattr(ns, "out", None) or RunConfig.output_dir)
            if ns.command == "plot":
                for path in render_plots(root):
                    print(path)
                return EXIT_OK
            return verify_runs(root)
        values = _gather(ns)
        if ns.command == "compare":
            values.pop("problem", None)
            return run_compare(values)
        cfg = resolve_config(values)
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        return run_trace(cfg)
    except MalformedArtifact as exc:
        print(f"foldcont: malformed input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"foldcont: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
