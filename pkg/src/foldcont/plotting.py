"""Static SVG rendering of branch and profile CSVs.

Output is a pure function of the input arrays: the SVG hash salt is fixed,
text stays text, and the creation date is omitted.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SVG_RC = {"svg.hashsalt": "foldcont", "svg.fonttype": "none", "path.simplify": False}


def _label(exponent: float) -> str:
    return f"a={exponent:g}"


def bifurcation_figure(series):
    """``series``: iterable of ``(exponent, lam, measure)`` triples, one curve each."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for exponent, lam, measure in series:
        (line,) = ax.plot(lam, measure, label=_label(exponent), linewidth=1.2)
        line.set_gid(f"branch-{_label(exponent)}")
    ax.set_xlabel("rho")
    ax.set_ylabel("psi(0)")
    ax.set_title("Bifurcation diagram")
    if ax.lines:
        ax.legend()
    return fig


def profile_figure(profiles, title="Solution profiles"):
    """``profiles``: iterable of ``(label, r, psi)``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label, r, psi in profiles:
        (line,) = ax.plot(r, psi, label=label, linewidth=1.2)
        line.set_gid(f"profile-{label}")
    ax.set_xlabel("r")
    ax.set_ylabel("psi")
    ax.set_title(title)
    if ax.lines:
        ax.legend()
    return fig


def write_svg(fig, path) -> Path:
    path = Path(path)
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
