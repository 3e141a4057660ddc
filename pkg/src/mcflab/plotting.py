"""PNG figures for the command-line reports.

All functions take already computed data, draw one figure with the Agg
backend and return the written path.  PNG metadata is stripped of the
software tag so reruns produce identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import INTERIOR, ScalarField  # noqa: E402

_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def _masked(field: ScalarField, values: np.ndarray | None = None, keep: np.ndarray | None = None):
    vals = field.values if values is None else values
    keep = field.mask == INTERIOR if keep is None else keep
    return np.ma.masked_where(~keep | ~np.isfinite(vals), vals)


def _axis_labels(ax, field: ScalarField):
    if field.grid.kind == "axisym_rz":
        ax.set_xlabel("r")
        ax.set_ylabel("z")
    else:
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_aspect("equal")


def plot_field(field: ScalarField, path, title: str = "", values: np.ndarray | None = None,
               keep: np.ndarray | None = None, cmap: str = "viridis", label: str = "",
               vmin: float | None = None, vmax: float | None = None) -> Path:
    """Colour map of a nodal field over its interior nodes."""
    X0, X1 = field.grid.coords()
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    mesh = ax.pcolormesh(X0, X1, _masked(field, values, keep), shading="nearest", cmap=cmap,
                         vmin=vmin, vmax=vmax)
    fig.colorbar(mesh, ax=ax, label=label)
    _axis_labels(ax, field)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


def plot_ladder_profiles(fields: Sequence[ScalarField], lambdas: Sequence[float], path,
                         exact=None) -> Path:
    """``u_lambda`` along the first-axis line through the grid centre, one curve per member."""
    fig, ax = plt.subplots(figsize=(6, 4))
    grid = fields[0].grid
    j = grid.shape[1] // 2
    x = grid.axis_coords(0)
    inside = fields[0].mask[:, j] != 0
    for u, lam in zip(fields, lambdas):
        ax.plot(x[inside], u.values[inside, j], lw=1.2, label=f"lambda = {lam:g}")
    if exact is not None:
        y = grid.axis_coords(1)[j]
        ax.plot(x[inside], exact(x[inside], np.full(inside.sum(), y)), "k--", lw=1, label="exact")
    ax.set_xlabel("axis 0")
    ax.set_ylabel("u")
    ax.legend(fontsize=8)
    ax.set_title("arrival-time estimates along the centre line")
    fig.tight_layout()
    return _save(fig, path)


def plot_convergence(lambdas: Sequence[float], series: dict[str, Sequence[float]], path,
                     title: str = "ladder convergence") -> Path:
    """Log-log plot of error-like sequences against lambda."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for name, vals in series.items():
        lam = list(lambdas)[-len(vals):]
        vals = np.asarray(vals, dtype=float)
        good = np.isfinite(vals) & (vals > 0)
        ax.loglog(np.asarray(lam)[good], vals[good], "o-", label=name)
    ax.set_xlabel("lambda")
    ax.legend(fontsize=8)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    return _save(fig, path)


def plot_singular(u: ScalarField, candidates: Sequence[dict], path) -> Path:
    """Arrival time with singular candidates marked by their classification."""
    X0, X1 = u.grid.coords()
    fig, ax = plt.subplots(figsize=(5, 6))
    mesh = ax.pcolormesh(X0, X1, _masked(u), shading="nearest", cmap="magma")
    fig.colorbar(mesh, ax=ax, label="u")
    markers = {"sphere": "o", "cylinder": "s"}
    for c in candidates:
        p = c["position"]
        ax.plot(p[0], p[1], markers.get(c["classification"], "x"), ms=9, mfc="none", mec="cyan", mew=1.5)
        ax.annotate(c["classification"], (p[0], p[1]), xytext=(6, 6), textcoords="offset points",
                    color="cyan", fontsize=8)
    _axis_labels(ax, u)
    ax.set_title("singular candidates")
    fig.tight_layout()
    return _save(fig, path)


def plot_boundary_flow(u: ScalarField, not_reached: np.ndarray, curve: np.ndarray | None, path,
                       chord: Sequence[Sequence[float]] | None = None, levels: Sequence[float] = ()) -> Path:
    """Reached region coloured by arrival time, limit curve and optional reference chord."""
    X0, X1 = u.grid.coords()
    keep = (u.mask != 0) & ~not_reached
    fig, ax = plt.subplots(figsize=(6.5, 3.5))
    mesh = ax.pcolormesh(X0, X1, _masked(u, keep=keep), shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="u (reached)")
    shade = np.ma.masked_where(~(not_reached & (u.mask != 0)), np.ones(u.grid.shape))
    ax.pcolormesh(X0, X1, shade, shading="nearest", cmap="Greys", vmin=0, vmax=2, alpha=0.6)
    if levels:
        vals = np.where(keep, u.values, np.nan)
        ax.contour(X0, X1, vals, levels=sorted(levels), colors="w", linewidths=0.7)
    if chord is not None:
        c = np.asarray(chord)
        ax.plot(c[:, 0], c[:, 1], "r--", lw=1, label="reference")
    if curve is not None:
        ax.plot(curve[:, 0], curve[:, 1], "k-", lw=1.2, label="limit curve")
        ax.legend(fontsize=8, loc="lower right")
    _axis_labels(ax, u)
    ax.set_title("boundary-motion flow")
    fig.tight_layout()
    return _save(fig, path)


def plot_staircase(rows: Sequence[dict], path) -> Path:
    """Staircase trace against arclength on both boundary arcs."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, style in (("sigma", "b-"), ("sigma_prime", "r-")):
        sel = [r for r in rows if r["piece"] == label]
        if sel:
            ax.plot([r["s"] for r in sel], [r["value"] for r in sel], style, lw=1.2, label=label)
    ax.set_xlabel("arclength along each arc")
    ax.set_ylabel("boundary value of f")
    ax.set_yscale("symlog", linthresh=1.0)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_profile(rows: Sequence[tuple], path, title: str = "") -> Path:
    """Soliton profile and slope."""
    r = np.array([row[0] for row in rows])
    phi = np.array([row[1] for row in rows])
    dphi = np.array([row[2] for row in rows])
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.plot(r, phi, "b-", label="phi")
    ax.plot(r, dphi, "r--", label="phi'")
    ax.set_xlabel("r")
    ax.legend(fontsize=8)
    ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)
