"""Curvature diagnostics of arrival-time functions.

For an arrival time ``u`` the level set ``{u = t}`` is the moving surface at
time ``t``.  With normal ``grad u / |grad u|`` (the direction of motion) its
principal curvatures come from the tangential block of ``-Hess u / |grad u|``,
and ``h = 1 / |grad u|`` wherever ``u`` is an exact arrival time.

On ``axisym_rz`` grids the level set is a surface of revolution; its second
principal curvature is the rotational one, ``-u_r / (r |grad u|)``, taken as
``-u_rr / |grad u|`` on the axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .curvature import CurvatureDiagnostics
from .mesh import Grid, ScalarField, gradient_field, hessian_field, hessian, gradient, stencil_ok


class PreconditionError(ValueError):
    def __init__(self, message: str, nodes: Sequence[tuple[int, ...]] = ()):
        nodes = [tuple(int(i) for i in n) for n in nodes]
        shown = ", ".join(str(n) for n in nodes[:8])
        more = f" (+{len(nodes) - 8} more)" if len(nodes) > 8 else ""
        super().__init__(f"{message}: {shown}{more}" if nodes else message)
        self.nodes = nodes


def regularity_threshold(grid: Grid) -> float:
    """Smallest gradient whose level-set curvature the grid can represent.

    The largest resolvable curvature is taken as ``1 / (4 dx)``, which
    bounds ``1 / |grad u|`` from above; the ``10 dx`` floor dominates.
    """
    dx = grid.h
    h_max = 1.0 / (4.0 * dx)
    return max(10.0 * dx, 1.0 / (4.0 * h_max))


def _kappas(grad: np.ndarray, hess: np.ndarray, grid: Grid, r=None) -> list[np.ndarray]:
    """Unsorted principal curvatures from gradient and Hessian arrays."""
    if grid.ndim != 2:
        raise ValueError("level-set curvatures need a two-axis grid")
    u0, u1 = grad[0], grad[1]
    g = np.sqrt(u0 * u0 + u1 * u1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t0, t1 = -u1 / g, u0 / g
        k_m = -(t0 * t0 * hess[0, 0] + 2 * t0 * t1 * hess[0, 1] + t1 * t1 * hess[1, 1]) / g
        out = [k_m]
        if grid.kind == "axisym_rz":
            if r is None:
                r = grid.coords()[0]
            rot = np.where(r == 0, hess[0, 0], u0 / np.where(r == 0, 1.0, r))
            out.append(-rot / g)
    return out


def level_set_curvature_fields(u: ScalarField, eps_reg: float | None = None) -> dict[str, np.ndarray]:
    """Curvature diagnostics at every node.

    Returns ``kappa`` (sorted along the leading axis), ``h``, ``ratio``
    (``kappa_1 / h``), ``ratio_last`` (``kappa_last / h``), ``grad_norm``,
    ``ok`` (stencil made of interior nodes only) and ``regular`` (``ok``, ``|grad u| >= eps_reg``
    and ``h > 0``).
    """
    grid = u.grid
    if eps_reg is None:
        eps_reg = regularity_threshold(grid)
    grad = gradient_field(u.values, grid)
    hess = hessian_field(u.values, grid)
    gnorm = np.sqrt((grad ** 2).sum(axis=0))
    kappa = np.sort(np.stack(_kappas(grad, hess, grid)), axis=0)
    h = kappa.sum(axis=0)
    ok = stencil_ok(u.mask, grid, strict=True)
    regular = ok & (gnorm >= eps_reg) & (h > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h != 0, kappa[0] / h, np.nan)
        ratio_last = np.where(h != 0, kappa[-1] / h, np.nan)
    return {"kappa": kappa, "h": h, "ratio": ratio, "ratio_last": ratio_last,
            "grad_norm": gnorm, "ok": ok, "regular": regular, "eps_reg": eps_reg}


def level_set_curvatures(u: ScalarField, node: Sequence[int], eps_reg: float | None = None) -> CurvatureDiagnostics:
    """Principal curvatures of the level set of ``u`` through one node."""
    grid = u.grid
    if eps_reg is None:
        eps_reg = regularity_threshold(grid)
    grad = gradient(u, node)  # raises on a bad stencil
    hess = hessian(u, node)
    node = tuple(int(i) for i in node)
    gnorm = float(np.linalg.norm(grad))
    if gnorm == 0.0:
        nan = float("nan")
        k = len(_kappas(np.ones((2, 1)), np.zeros((2, 2, 1)), grid))
        return CurvatureDiagnostics((nan,) * k, nan, nan, 0.0, False)
    r = np.array([grid.node_position(node)[0]])
    ks = [float(k[0]) for k in _kappas(grad[:, None], hess[:, :, None], grid, r=r)]
    return CurvatureDiagnostics.from_kappas(ks, gnorm, regular=gnorm >= eps_reg)


def _nonregular(fields: dict, K: np.ndarray) -> list[tuple[int, ...]]:
    return [tuple(n) for n in np.argwhere(K & ~fields["regular"])]


def arrival_residual(u: ScalarField, K: np.ndarray, eps_reg: float | None = None) -> float:
    """Sup over ``K`` of ``|h |grad u| - 1|``; zero for an exact arrival time."""
    K = np.asarray(K, dtype=bool)
    fields = level_set_curvature_fields(u, eps_reg)
    bad = _nonregular(fields, K)
    if bad:
        raise PreconditionError("probe set contains non-regular nodes", bad)
    if not K.any():
        raise PreconditionError("empty probe set")
    return float(np.abs(fields["h"] * fields["grad_norm"] - 1.0)[K].max())


def product_lift(diag: CurvatureDiagnostics) -> CurvatureDiagnostics:
    """Curvatures of ``U(x, y) = u(x)``: the extra direction is flat."""
    return CurvatureDiagnostics.from_kappas(diag.kappas + (0.0,), diag.grad_norm, diag.regular)


def product_lift_check(u: ScalarField, probes: Sequence[Sequence[int]], eps_reg: float | None = None) -> float:
    """Max defect of ``h(U) = h(u)`` and ``kappa_1(U) = min(0, kappa_1(u))`` over probes."""
    worst = 0.0
    for node in probes:
        d = level_set_curvatures(u, node, eps_reg)
        if not d.regular:
            raise PreconditionError("probe is not regular", [node])
        lift = product_lift(d)
        worst = max(worst, abs(lift.h - d.h), abs(lift.kappa1 - min(0.0, d.kappa1)))
    return worst


def relative_boundary(K: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Nodes of ``K`` with a grid neighbour (8-connectivity) outside ``K``.

    On axis grids the axis is a mirror line, not an edge.
    """
    K = np.asarray(K, dtype=bool)
    mirror = grid is not None and grid.has_axis and K.shape[0] > 1
    work = np.concatenate([K[1:2], K], axis=0) if mirror else K
    inner = ndimage.binary_erosion(work, structure=np.ones((3,) * K.ndim), border_value=0)
    if mirror:
        inner = inner[1:]
    return K & ~inner


def epsilon_grid(values: np.ndarray, valid: np.ndarray, where: np.ndarray, grid: Grid) -> float:
    """``5 dx L`` with ``L`` the largest difference quotient of ``values`` at ``where``.

    Difference quotients are taken along grid axes between pairs of
    ``valid`` nodes (normally the checked set), at least one of which lies
    in ``where``.
    """
    values = np.asarray(values, dtype=float)
    valid = np.asarray(valid, dtype=bool) & np.isfinite(values)
    where = np.asarray(where, dtype=bool)
    lip = 0.0
    for a in range(grid.ndim):
        lo = [slice(None)] * grid.ndim
        hi = [slice(None)] * grid.ndim
        lo[a] = slice(0, -1)
        hi[a] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        pair = valid[lo] & valid[hi] & (where[lo] | where[hi])
        if pair.any():
            q = np.abs(values[hi] - values[lo])[pair] / grid.spacing[a]
            lip = max(lip, float(q.max()))
    return 5.0 * grid.h * lip


@dataclass(frozen=True)
class RatioBound:
    interior_min: float
    boundary_min: float
    margin: float
    eps_grid: float

    @property
    def passed(self) -> bool:
        return self.margin >= -self.eps_grid

    def to_dict(self) -> dict:
        return {"interior_min": self.interior_min, "boundary_min": self.boundary_min,
                "margin": self.margin, "eps_grid": self.eps_grid, "passed": self.passed}


def ratio_bound_check(u: ScalarField, K: np.ndarray, eps_reg: float | None = None) -> RatioBound:
    """Compare the minimum of ``kappa_1 / h`` inside ``K`` with its boundary minimum.

    The margin is ``interior_min - min(0, boundary_min)``; a margin above
    ``-eps_grid`` means the ratio bound propagates from the boundary inward.
    """
    K = np.asarray(K, dtype=bool)
    fields = level_set_curvature_fields(u, eps_reg)
    edge = relative_boundary(K, u.grid)
    bad = _nonregular(fields, edge)
    if bad:
        raise PreconditionError("relative boundary of K has non-regular nodes", bad)
    reg = fields["regular"]
    ratio = fields["ratio"]
    inner = K & ~edge & reg
    bmin = float(ratio[edge].min()) if edge.any() else float("nan")
    imin = float(ratio[inner].min()) if inner.any() else bmin
    eps = epsilon_grid(ratio, reg & K, edge, u.grid)
    return RatioBound(imin, bmin, imin - min(0.0, bmin), eps)


def curvature_table(u: ScalarField, eps_reg: float | None = None) -> list[dict]:
    """Rows ``axis0, axis1, kappa1, kappa_last, h, ratio, grad_norm, regular`` for stencil nodes."""
    fields = level_set_curvature_fields(u, eps_reg)
    X = u.grid.coords()
    rows = []
    for node in np.argwhere(fields["ok"]):
        node = tuple(node)
        rows.append({
            "axis0": float(X[0][node]), "axis1": float(X[1][node]),
            "kappa1": float(fields["kappa"][(0,) + node]),
            "kappa_last": float(fields["kappa"][(-1,) + node]),
            "h": float(fields["h"][node]), "ratio": float(fields["ratio"][node]),
            "grad_norm": float(fields["grad_norm"][node]),
            "regular": int(fields["regular"][node]),
        })
    return rows
