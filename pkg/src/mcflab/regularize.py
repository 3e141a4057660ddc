"""Elliptic regularization: translator graphs ``f_lambda`` and lambda ladders.

The graph of ``f`` over the domain moves by mean curvature when translated
with velocity ``-lambda e_{n+1}`` iff

    Delta f - f_i f_j f_ij / (1 + |Df|^2) + lambda = 0.

The unknown actually iterated on is ``u = f / lambda`` (the finite-lambda
arrival-time estimate), for which the residual

    R(u) = a_ij(lambda Du) u_ij + 1,   a_ij(q) = delta_ij - q_i q_j / (1 + |q|^2)

is dimensionless and stays O(1) as lambda grows.  On ``axisym_rz`` grids the
rotational direction is always tangent to the level sets and contributes the
extra term ``u_r / r`` (``u_rr`` on the axis).

Newton's method with a sparse direct solve and step halving drives the
residual sup-norm below the tolerance; ladders warm-start each member from
the previous solution.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .curvature import CurvatureDiagnostics, generalized_eigvals2
from .domain import DomainSpec, build_mask, validate_mean_convex
from .mesh import BOUNDARY, INTERIOR, Grid, ScalarField, StencilError, gradient_field, hessian_field, stencil_ok

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
THETA_MIN = 1e-2
MAX_HALVINGS = 8
FROZEN_STEPS = 5
ROUNDOFF_FACTOR = 4.0
_OFFSETS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 0), (0, 1), (1, -1), (1, 0), (1, 1))


class ParameterError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    """Newton stagnated; ``iterate`` holds the last accepted ``u``."""

    def __init__(self, message: str, iterate: np.ndarray, lam: float, residual: float):
        super().__init__(message)
        self.iterate = iterate
        self.lam = lam
        self.residual = residual


class LadderError(RuntimeError):
    """A ladder member failed; ``completed`` keeps the members solved before it."""

    def __init__(self, lam: float, cause: Exception, completed: Sequence["RegularizedSolution"] = ()):
        super().__init__(f"ladder member lambda={lam:g} failed: {cause}")
        self.lam = lam
        self.cause = cause
        self.completed = list(completed)


@dataclass
class RegularizedSolution:
    lam: float
    domain: DomainSpec
    f: ScalarField
    g: np.ndarray
    residual: float
    iterations: int
    trace: list[tuple[float, float]] = field(default_factory=list)
    seconds: float = 0.0
    boundary_data: object = field(default=None, repr=False)
    cut_cell: bool = True
    rounding: float = 0.0  # rounding allowance added to tol at the final iterate

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def summary(self) -> dict:
        u = u_lambda(self)
        grad = gradient_field(self.f.values, self.grid)
        ok = stencil_ok(self.f.mask, self.grid, strict=True)
        gnorm = np.sqrt((grad ** 2).sum(axis=0))
        centre = self.grid.nearest_node(_domain_centre(self.domain))
        return {
            "lambda": self.lam,
            "iterations": self.iterations,
            "residual": self.residual,
            "rounding_allowance": self.rounding,
            "center_value": float(u.values[centre]),
            "max_u": float(u.values[self.f.interior].max()),
            "sup_grad_f": float(gnorm[ok].max()) if ok.any() else 0.0,
        }


@dataclass
class LadderResult:
    schedule: list[float]
    solutions: list[RegularizedSolution]
    probe: np.ndarray
    differences: list[float]

    @property
    def summaries(self) -> list[dict]:
        return [s.summary() for s in self.solutions]

    def u_fields(self) -> list[ScalarField]:
        return [u_lambda(s) for s in self.solutions]


def _domain_centre(domain: DomainSpec) -> tuple[float, float]:
    (lo0, hi0), (lo1, hi1) = domain.bounding_box()
    if domain.n == 3:
        return 0.0, 0.5 * (lo1 + hi1)
    return 0.5 * (lo0 + hi0), 0.5 * (lo1 + hi1)


class GraphOperator:
    """Residual and Jacobian of the scaled translator equation on one mask."""

    def __init__(self, grid: Grid, mask: np.ndarray, lam: float, level=None, boundary_value=None):
        """``level`` (negative inside) switches on cut-cell ghost values.

        Without it, boundary nodes simply carry their Dirichlet values.  With
        it, each interior-to-boundary stencil arm finds where the domain
        boundary crosses the arm and the boundary node's value is replaced by
        the linear extrapolation through that crossing.  ``boundary_value``
        gives ``u`` at crossing points: a callable of positions, or a grid
        array whose value at the boundary node is used.
        """
        if grid.ndim != 2:
            raise ValueError("translator graphs are solved on 2-axis grids")
        self.grid = grid
        self.lam = float(lam)
        self.mask = np.asarray(mask)
        nodes = np.argwhere(self.mask == INTERIOR)
        ok = stencil_ok(self.mask, grid)
        bad = ~ok[tuple(nodes.T)]
        if bad.any():
            raise StencilError(tuple(nodes[np.argmax(bad)]))
        self.nodes = nodes
        n0, n1 = grid.shape
        self.flat = nodes[:, 0] * n1 + nodes[:, 1]
        self.unknown = -np.ones(grid.size, dtype=np.int64)
        self.unknown[self.flat] = np.arange(len(nodes))
        self.nb = {}
        for a, b in _OFFSETS:
            i = nodes[:, 0] + a
            j = nodes[:, 1] + b
            if grid.has_axis:
                i = np.abs(i)
            self.nb[(a, b)] = i * n1 + j
        self.axisym = grid.kind == "axisym_rz"
        r = grid.origin[0] + grid.spacing[0] * nodes[:, 0]
        self.on_axis = (nodes[:, 0] == 0) if self.axisym else np.zeros(len(nodes), dtype=bool)
        self.inv_r = np.zeros(len(nodes))
        if self.axisym:
            off = ~self.on_axis
            self.inv_r[off] = 1.0 / r[off]
        self.ghosts = {}
        if level is not None:
            self._setup_ghosts(level, boundary_value)

    def _setup_ghosts(self, level, boundary_value):
        grid = self.grid
        nodes = self.nodes
        flat_mask = self.mask.ravel()
        h = np.asarray(grid.spacing)
        o = np.asarray(grid.origin)
        for off, idx in self.nb.items():
            if off == (0, 0):
                continue
            rows = np.flatnonzero(flat_mask[idx] == BOUNDARY)
            if rows.size == 0:
                continue
            xi = o + h * nodes[rows]
            xb = o + h * (nodes[rows] + np.asarray(off))
            theta = _crossing(level, xi, xb)
            theta = np.maximum(theta, THETA_MIN)
            if callable(boundary_value):
                pts = xi + theta[:, None] * (xb - xi)
                gc = np.asarray(boundary_value(pts[:, 0], pts[:, 1]), dtype=float)
            elif boundary_value is None:
                gc = np.zeros(rows.size)
            else:
                gc = np.asarray(boundary_value, dtype=float).ravel()[idx[rows]]
            # ghost = gc / theta - (1 - theta) / theta * u_i
            self.ghosts[off] = (rows, gc / theta, -(1.0 - theta) / theta)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def _stencil(self, u_flat):
        h0, h1 = self.grid.spacing
        v = {k: u_flat[idx] for k, idx in self.nb.items()}
        if self.ghosts:
            centre = v[(0, 0)]
            for off, (rows, a, b) in self.ghosts.items():
                v[off][rows] = a + b * centre[rows]
        d0 = (v[(1, 0)] - v[(-1, 0)]) / (2 * h0)
        d1 = (v[(0, 1)] - v[(0, -1)]) / (2 * h1)
        d00 = (v[(1, 0)] - 2 * v[(0, 0)] + v[(-1, 0)]) / h0 ** 2
        d11 = (v[(0, 1)] - 2 * v[(0, 0)] + v[(0, -1)]) / h1 ** 2
        d01 = (v[(1, 1)] - v[(1, -1)] - v[(-1, 1)] + v[(-1, -1)]) / (4 * h0 * h1)
        return d0, d1, d00, d11, d01

    def residual(self, u_flat: np.ndarray) -> np.ndarray:
        d0, d1, d00, d11, d01 = self._stencil(u_flat)
        q0, q1 = self.lam * d0, self.lam * d1
        D = 1.0 + q0 * q0 + q1 * q1
        # a_ij written without the cancellation in 1 - q_i^2 / D
        R = ((1.0 + q1 * q1) * d00 - 2 * q0 * q1 * d01 + (1.0 + q0 * q0) * d11) / D + 1.0
        if self.axisym:
            R = R + np.where(self.on_axis, d00, d0 * self.inv_r)
        return R

    def roundoff(self, u_flat: np.ndarray) -> float:
        """Rounding level of the residual: difference quotients of values of size ``max |u|``.

        Ghost values count with the magnitude of their two terms.
        """
        h0, h1 = self.grid.spacing
        weight = 4.0 / h0 ** 2 + 4.0 / h1 ** 2 + 2.0 / (h0 * h1)
        if self.axisym:
            weight += 4.0 / h0 ** 2
        size = float(np.abs(u_flat).max()) + 1.0
        centre = u_flat[self.nb[(0, 0)]]
        for rows, a, b in self.ghosts.values():
            # ghost values involve the cancellation gc / theta - (1 - theta) / theta * u_i
            size = max(size, float((np.abs(a) + np.abs(b * centre[rows])).max()))
        return ROUNDOFF_FACTOR * np.finfo(float).eps * weight * size

    def jacobian(self, u_flat: np.ndarray, frozen: bool = False) -> sp.csc_matrix:
        """Derivative of the residual; ``frozen`` drops the dependence of ``a_ij`` on ``u``."""
        h0, h1 = self.grid.spacing
        lam = self.lam
        d0, d1, d00, d11, d01 = self._stencil(u_flat)
        q0, q1 = lam * d0, lam * d1
        D = 1.0 + q0 * q0 + q1 * q1
        A00 = (1.0 + q1 * q1) / D
        A11 = (1.0 + q0 * q0) / D
        A01 = -q0 * q1 / D
        Hq0 = d00 * q0 + d01 * q1
        Hq1 = d01 * q0 + d11 * q1
        qHq = q0 * Hq0 + q1 * Hq1
        T0 = -lam * (2 * Hq0 / D - 2 * qHq * q0 / D ** 2)
        T1 = -lam * (2 * Hq1 / D - 2 * qHq * q1 / D ** 2)
        if frozen:
            T0 = T1 = 0.0
        c00 = A00 / h0 ** 2
        if self.axisym:
            c00 = c00 + np.where(self.on_axis, 1.0 / h0 ** 2, 0.0)
            c0 = T0 / (2 * h0) + np.where(self.on_axis, 0.0, self.inv_r / (2 * h0))
        else:
            c0 = T0 / (2 * h0)
        c11 = A11 / h1 ** 2
        c1 = T1 / (2 * h1)
        cx = 2 * A01 / (4 * h0 * h1)
        coef = {
            (0, 0): -2 * c00 - 2 * c11,
            (1, 0): c00 + c0,
            (-1, 0): c00 - c0,
            (0, 1): c11 + c1,
            (0, -1): c11 - c1,
            (1, 1): cx,
            (-1, -1): cx,
            (1, -1): -cx,
            (-1, 1): -cx,
        }
        rows, cols, vals = [], [], []
        rid = np.arange(self.size)
        for off, c in coef.items():
            col = self.unknown[self.nb[off]]
            keep = col >= 0
            cb = np.broadcast_to(c, rid.shape)
            rows.append(rid[keep])
            cols.append(col[keep])
            vals.append(cb[keep])
            if off in self.ghosts:
                gr, _, slope = self.ghosts[off]
                rows.append(gr)
                cols.append(gr)
                vals.append(cb[gr] * slope)
        J = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        return J.tocsc()


def _crossing(level, xi: np.ndarray, xb: np.ndarray, steps: int = 48) -> np.ndarray:
    """Fraction along ``xi -> xb`` where ``level`` changes sign (bisection)."""
    lo = np.zeros(len(xi))
    hi = np.ones(len(xi))
    outside_end = level(xb[:, 0], xb[:, 1]) >= 0
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        p = xi + mid[:, None] * (xb - xi)
        inside = level(p[:, 0], p[:, 1]) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return np.where(outside_end, 0.5 * (lo + hi), 1.0)


def _boundary_values(g, mask: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    if g is None:
        return out
    if np.isscalar(g):
        out[mask == BOUNDARY] = float(g)
        return out
    g = np.asarray(g, dtype=float)
    if g.shape != tuple(shape):
        raise ValueError("boundary data must be a scalar or a full-grid array")
    if not np.isfinite(g[mask == BOUNDARY]).all():
        raise ValueError("boundary data must be finite on boundary nodes")
    out[mask == BOUNDARY] = g[mask == BOUNDARY]
    return out


def newton_solve(op: GraphOperator, u0: np.ndarray, tol: float = DEFAULT_TOL,
                 max_iter: int = 60) -> tuple[np.ndarray, float, int, list[float]]:
    """Damped Newton on ``op``; ``u0`` is the full flattened grid array.

    When no damped Newton step lowers the residual, a few fixed-point steps
    with the coefficients ``a_ij`` frozen are taken instead before Newton is
    retried; they converge slowly but from much farther away.  Convergence
    means the sup residual is below ``tol`` plus the rounding level of the
    equation's terms, which matters for very steep graphs.
    """
    u = np.array(u0, dtype=float)
    interior = op.flat
    R = op.residual(u)
    res = float(np.abs(R).max())
    history = [res]
    it = 0
    while res > tol + op.roundoff(u):
        if it >= max_iter:
            raise NonConvergenceError(f"no convergence in {max_iter} Newton steps "
                                      f"(residual {res:.3e})", u, op.lam, res)
        J = op.jacobian(u)
        step = splu(J, permc_spec="COLAMD").solve(-R)
        merit = float(R @ R)
        alpha = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = u.copy()
            trial[interior] += alpha * step
            Rt = op.residual(trial)
            if np.isfinite(Rt).all() and float(Rt @ Rt) < merit:
                break
            alpha *= 0.5
        else:
            trial, Rt = u, R
            for _ in range(FROZEN_STEPS):
                J = op.jacobian(trial, frozen=True)
                trial = trial.copy()
                trial[interior] -= splu(J, permc_spec="COLAMD").solve(Rt)
                Rt = op.residual(trial)
                it += 1
                if not np.isfinite(Rt).all():
                    raise NonConvergenceError(f"Newton stagnated at lambda={op.lam:g} "
                                              f"(residual {res:.3e})", u, op.lam, res)
            alpha = 0.0
        u, R = trial, Rt
        res = float(np.abs(R).max())
        history.append(res)
        it += 1
        logger.debug("lambda=%g newton %d alpha=%g residual=%.3e", op.lam, it, alpha, res)
    return u, res, it, history


def solve_translator_graph(domain: DomainSpec, grid: Grid, lam: float, g=None,
                           init: ScalarField | None = None, tol: float = DEFAULT_TOL,
                           max_iter: int = 60, check_domain: bool = True,
                           mask: ScalarField | None = None, cut_cell: bool = True) -> RegularizedSolution:
    """Solve the translator Dirichlet problem for ``f_lambda``.

    ``g`` gives the Dirichlet values of ``f``: ``None`` (zero), a scalar, a
    full grid array read at boundary nodes, or a callable ``g(x0, x1)``.
    With ``cut_cell`` the data are imposed where grid lines cross the true
    boundary rather than at the boundary nodes themselves.  ``init`` is an
    initial ``f``; its interior values seed Newton.  The returned residual
    is the sup-norm of the equation divided by ``lambda``.
    """
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    if check_domain and domain.kind not in ("lens", "square"):
        report = validate_mean_convex(domain)
        if not report.passed:
            raise ParameterError(f"domain is not mean convex (min curvature {report.min_curvature:g})")
    t0 = time.perf_counter()
    if mask is None:
        mask = build_mask(domain, grid)
    if callable(g):
        gvals = _boundary_values(np.asarray(g(*grid.coords()), dtype=float), mask.mask, grid.shape)
        crossing = (lambda x0, x1: np.asarray(g(x0, x1), dtype=float) / lam)
    else:
        gvals = _boundary_values(g, mask.mask, grid.shape)
        crossing = gvals / lam
    op = GraphOperator(grid, mask.mask, lam, level=domain.level if cut_cell else None,
                       boundary_value=crossing)
    u0 = gvals / lam
    if init is not None:
        if init.grid != grid:
            raise ValueError("initial field lives on a different grid")
        u0 = np.where(mask.mask == INTERIOR, init.values / lam, u0)
    u, res, iters, hist = newton_solve(op, u0.ravel(), tol=tol, max_iter=max_iter)
    f = ScalarField(grid, lam * u.reshape(grid.shape), mask.mask)
    return RegularizedSolution(lam=float(lam), domain=domain, f=f, g=gvals, residual=res,
                               iterations=iters, trace=[(float(lam), r) for r in hist],
                               seconds=time.perf_counter() - t0, boundary_data=g, cut_cell=cut_cell,
                               rounding=float(op.roundoff(u)))


def u_lambda(solution: RegularizedSolution) -> ScalarField:
    """``u_lambda = f_lambda / lambda``, the level-set description of the translating graph."""
    return solution.f.with_values(solution.f.values / solution.lam)


def probe_mask(domain: DomainSpec, grid: Grid, mask: np.ndarray, fraction: float = 0.9) -> np.ndarray:
    """Fixed compact probe set: interior nodes well inside the domain.

    Nodes whose implicit level is below ``-(1 - fraction)`` times the
    domain's inradius scale; for the unit disk this is ``|x| <= 0.9``.
    """
    X0, X1 = grid.coords()
    lvl = domain.level(X0, X1)
    (lo0, hi0), (lo1, hi1) = domain.bounding_box()
    span = min(hi0 - lo0, hi1 - lo1) if domain.n == 2 else min(hi0, (hi1 - lo1) / 2)
    scale = span / 2 if domain.n == 2 else span
    return (mask == INTERIOR) & (lvl <= -(1 - fraction) * scale)


def lambda_ladder(domain: DomainSpec, grid: Grid, schedule: Sequence[float], g=None,
                  tol: float = DEFAULT_TOL, max_iter: int = 60, probe: np.ndarray | None = None,
                  check_domain: bool = True, cut_cell: bool = True) -> LadderResult:
    """Continuation along an increasing lambda schedule.

    ``g`` is boundary data for ``f`` shared by all members, in any form
    accepted by :func:`solve_translator_graph`.  Successive sup-norm
    differences of ``u_lambda`` on the probe set are recorded.
    """
    schedule = [float(s) for s in schedule]
    if not schedule:
        raise ParameterError("empty lambda schedule")
    if any(s <= 0 for s in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("lambda schedule must be strictly increasing and positive")
    mask = build_mask(domain, grid)
    if probe is None:
        probe = probe_mask(domain, grid, mask.mask)
    sols: list[RegularizedSolution] = []
    prev = None
    for lam in schedule:
        init = None
        if prev is not None:
            # continuation: keep u = f / lambda, not f
            init = prev.f.with_values(prev.f.values * lam / prev.lam)
        try:
            sol = solve_translator_graph(domain, grid, lam, g, init=init, tol=tol,
                                         max_iter=max_iter, check_domain=check_domain, mask=mask,
                                         cut_cell=cut_cell)
        except (NonConvergenceError, ParameterError) as exc:
            raise LadderError(lam, exc, sols) from exc
        logger.info("lambda=%g converged in %d steps, residual %.2e", lam, sol.iterations, sol.residual)
        sols.append(sol)
        prev = sol
    return ladder_result(schedule, sols, probe)


def ladder_result(schedule: Sequence[float], sols: list[RegularizedSolution], probe: np.ndarray) -> LadderResult:
    us = [u_lambda(s).values for s in sols]
    if probe.any():
        diffs = [float(np.abs(b - a)[probe].max()) for a, b in zip(us, us[1:])]
    else:
        diffs = [float("nan")] * (len(us) - 1)
    return LadderResult([float(x) for x in schedule], sols, probe, diffs)


# ---------------------------------------------------------------------------
# curvature of the graph N_lambda


def graph_curvature_fields(solution: RegularizedSolution) -> dict[str, np.ndarray]:
    """Principal curvatures of ``graph(f)`` at nodes whose stencil is all interior.

    Curvatures are taken with respect to the normal ``(Df, -1) / W`` (the
    side the graph moves toward), so ``h = lambda / W`` on a solution.
    Returns arrays ``kappa`` (sorted, leading axis), ``h``, ``ratio``,
    ``W`` and the boolean ``ok`` (valid stencil).
    """
    grid = solution.grid
    f = solution.f.values
    ok = stencil_ok(solution.f.mask, grid, strict=True)
    p = gradient_field(f, grid)
    H = hessian_field(f, grid)
    W = np.sqrt(1.0 + (p ** 2).sum(axis=0))
    g00 = 1 + p[0] ** 2
    g11 = 1 + p[1] ** 2
    g01 = p[0] * p[1]
    k_lo, k_hi = generalized_eigvals2(g00, g01, g11, -H[0, 0] / W, -H[0, 1] / W, -H[1, 1] / W)
    ks = [k_lo, k_hi]
    if grid.kind == "axisym_rz":
        r = grid.coords()[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            k_rot = np.where(r == 0, -H[0, 0] / W, -p[0] / (np.where(r == 0, 1.0, r) * W))
        ks.append(k_rot)
    kappa = np.sort(np.stack(ks), axis=0)
    h = kappa.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h > 0, kappa[0] / h, np.nan)
    return {"kappa": kappa, "h": h, "ratio": ratio, "W": W, "ok": ok}


def graph_curvatures(solution: RegularizedSolution, node: Sequence[int]) -> CurvatureDiagnostics:
    """Principal curvatures of ``N_lambda = graph(f_lambda)`` above one node."""
    node = tuple(int(i) for i in node)
    ok = stencil_ok(solution.f.mask, solution.grid, strict=True)
    if not ok[node]:
        raise StencilError(node)
    fields = graph_curvature_fields(solution)
    ks = fields["kappa"][(slice(None),) + node]
    W = fields["W"][node]
    grad = np.sqrt(W * W - 1.0)
    return CurvatureDiagnostics.from_kappas(ks, grad, regular=bool(fields["h"][node] > 0))


# ---------------------------------------------------------------------------
# invariant checks on converged solutions


def translator_inequality_check(solution: RegularizedSolution, K: np.ndarray | None = None,
                                fraction: float = 0.05) -> dict:
    """Compare ``kappa_1 / h`` of ``N_lambda`` inside ``K`` with its minimum on ``dK``.

    ``K`` defaults to ``{u_lambda >= fraction * max u_lambda}``.  Passes when
    the interior minimum is at least the boundary minimum minus ``eps_grid``.
    """
    from .arrival import epsilon_grid, relative_boundary

    u = u_lambda(solution)
    if K is None:
        vals = np.where(u.interior, u.values, -np.inf)
        K = vals >= fraction * vals.max()
    fields = graph_curvature_fields(solution)
    valid = fields["ok"] & (fields["h"] > 0)
    K = np.asarray(K, dtype=bool) & valid
    edge = relative_boundary(K, solution.grid)
    inner = K & ~edge
    ratio = fields["ratio"]
    bmin = float(ratio[edge].min())
    imin = float(ratio[inner].min()) if inner.any() else bmin
    eps = epsilon_grid(ratio, K, edge, solution.grid)
    return {"lambda": solution.lam, "interior_min": imin, "boundary_min": bmin,
            "eps_grid": eps, "passed": bool(imin >= bmin - eps)}


def nested_sets(solution: RegularizedSolution, count: int = 5) -> list[np.ndarray]:
    """Inner parallel sets of the domain, shrinking from 90% to 50% of its scale."""
    fracs = np.linspace(0.9, 0.5, count)
    return [probe_mask(solution.domain, solution.grid, solution.f.mask, fraction=float(t)) for t in fracs]


def gradient_bound_check(solution: RegularizedSolution, sets: Sequence[np.ndarray] | None = None) -> list[dict]:
    """``sup_K |Df| <= sup_dK |Df| + eps_grid`` for each set ``K``."""
    from .arrival import epsilon_grid, relative_boundary

    grid = solution.grid
    ok = stencil_ok(solution.f.mask, grid, strict=True)
    p = gradient_field(solution.f.values, grid)
    gnorm = np.sqrt((p ** 2).sum(axis=0))
    out = []
    for K in sets if sets is not None else nested_sets(solution):
        K = np.asarray(K, dtype=bool) & ok
        edge = relative_boundary(K, grid)
        sup_k = float(gnorm[K].max())
        sup_b = float(gnorm[edge].max())
        eps = epsilon_grid(gnorm, K, edge, grid)
        out.append({"sup_K": sup_k, "sup_boundary": sup_b, "eps_grid": eps,
                    "passed": bool(sup_k <= sup_b + eps)})
    return out


def smooth_perturbation(solution: RegularizedSolution, amplitude: float, seed: int = 0,
                        bumps: int = 6) -> np.ndarray:
    """Sum of random Gaussian bumps, tapered to vanish on the boundary."""
    rng = np.random.default_rng(seed)
    grid = solution.grid
    X = grid.coords()
    interior = solution.f.interior
    pts = np.argwhere(interior)
    lvl = solution.domain.level(*X)
    taper = np.clip(-lvl / max(1e-12, float(-lvl[interior].min())), 0.0, 1.0)
    field_ = np.zeros(grid.shape)
    scale = 0.25 * max(np.ptp(x[interior]) for x in X)
    for _ in range(bumps):
        c = pts[rng.integers(len(pts))]
        centre = [x[tuple(c)] for x in X]
        r2 = sum((x - m) ** 2 for x, m in zip(X, centre))
        field_ += rng.uniform(-1.0, 1.0) * np.exp(-r2 / scale ** 2)
    field_ *= taper
    field_ /= max(1e-300, float(np.abs(field_[interior]).max()))
    return amplitude * np.where(interior, field_, 0.0)


def uniqueness_check(solution: RegularizedSolution, tol: float = DEFAULT_TOL, seed: int = 0) -> dict:
    """Re-solve from a perturbed start and compare ``u_lambda`` fields.

    The start is ``f`` plus a smooth bump field of amplitude ``0.1 max f``.
    Passes when the two solutions differ by at most ``10 tol``.
    """
    f = solution.f
    amp = 0.1 * float(f.values[f.interior].max())
    pert = f.with_values(f.values + smooth_perturbation(solution, amp, seed))
    again = solve_translator_graph(solution.domain, solution.grid, solution.lam, g=solution.boundary_data,
                                   init=pert, tol=tol, check_domain=False, mask=f,
                                   cut_cell=solution.cut_cell)
    diff = float(np.abs(u_lambda(again).values - u_lambda(solution).values)[f.interior].max())
    return {"lambda": solution.lam, "difference": diff, "bound": 10 * tol,
            "iterations": again.iterations, "passed": bool(diff <= 10 * tol)}


def ordering_check(lower: RegularizedSolution, upper: RegularizedSolution) -> dict:
    """``f_lower <= f_upper + eps_grid`` for solutions with ordered boundary data."""
    from .arrival import epsilon_grid

    grid = lower.grid
    ok = lower.f.interior
    gap = lower.f.values - upper.f.values
    eps = epsilon_grid(upper.f.values, upper.f.mask != 0, ok, grid)
    worst = float(gap[lower.f.mask != 0].max())
    return {"max_excess": worst, "eps_grid": eps, "passed": bool(worst <= eps)}
