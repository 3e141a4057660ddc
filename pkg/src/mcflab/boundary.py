"""Planar flows whose boundary moves along a prescribed barrier.

The domain ``W`` is bounded by two arcs meeting at the corner pair ``Gamma``:
the initial curve ``sigma`` and the barrier ``sigma_prime``.  The boundary
points of the flowing curve slide monotonically along ``sigma_prime``,
described by two arclength functions ``s_left(t)`` and ``s_right(t)``
measured from the left and right corners.

The arrival time is approximated by a translating graph over ``W`` whose
Dirichlet trace is a staircase: zero on ``sigma``, ``lam * tau`` where the
barrier has been swept at time ``tau``, and ``lam * T`` on the part still
unswept at the horizon ``T``.  Jumps at static corners are smoothed over an
arclength collar of width ``1 / lam``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .domain import DomainSpec, SpecificationError, boundary_pieces, build_mask, validate_mean_convex
from .mesh import BOUNDARY, INTERIOR, Grid, ScalarField
from .regularize import (LadderError, LadderResult, NonConvergenceError, ParameterError, ladder_result,
                         probe_mask, solve_translator_graph, u_lambda, DEFAULT_TOL)

logger = logging.getLogger(__name__)

PROBE_GAP = 0.05
START_HORIZON = 1.0
HORIZON_FACTOR = 4.0


class HypothesisError(ValueError):
    """The boundary-motion data violate one of the standing hypotheses."""


class DegenerateOutputError(RuntimeError):
    pass


def smoothstep(x):
    """C2 ramp from 0 at ``x <= 0`` to 1 at ``x >= 1``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass
class BoundaryMotionSpec:
    """Domain, barrier motion and horizon rule.

    ``samples`` rows are ``(t, s_left, s_right)``; between samples the
    parameters are interpolated linearly and after the last one they stay
    put.  ``limit`` holds the limiting parameters (defaults to the last
    sample).  The horizon is ``T(lam) = horizon_scale * lam ** horizon_power``.
    """

    domain: DomainSpec
    samples: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    limit: tuple[float, float] | None = None
    horizon_scale: float = 1.0
    horizon_power: float = 2.0
    settle_tol: float = 1e-3

    def __post_init__(self):
        if self.domain.kind not in ("lens", "square"):
            raise SpecificationError("boundary motion needs a lens or square domain")
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2 or s.shape[1] != 3 or s.shape[0] < 1:
            raise SpecificationError("motion samples must be rows (t, s_left, s_right)")
        if not np.all(np.isfinite(s)):
            raise SpecificationError("motion samples must be finite")
        self.samples = s
        if self.limit is None:
            self.limit = (float(s[-1, 1]), float(s[-1, 2]))
        self.limit = (float(self.limit[0]), float(self.limit[1]))
        if not self.horizon_scale > 0:
            raise SpecificationError("horizon scale must be positive")

    # -- geometry ---------------------------------------------------------

    @property
    def pieces(self):
        return boundary_pieces(self.domain)

    @property
    def sigma(self):
        return [p for p in self.pieces if p.label == "sigma"]

    @property
    def sigma_prime(self):
        return [p for p in self.pieces if p.label == "sigma_prime"]

    @property
    def barrier_length(self) -> float:
        return float(sum(p.length for p in self.sigma_prime))

    @property
    def corners(self) -> tuple[np.ndarray, np.ndarray]:
        sig = self.sigma[0]
        return np.asarray(sig.start, dtype=float), np.asarray(sig.end, dtype=float)

    def barrier_point(self, s) -> np.ndarray:
        """Point of ``sigma_prime`` at arclength ``s`` from the left corner."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty(s.shape + (2,))
        start = 0.0
        pieces = self.sigma_prime
        for k, pc in enumerate(pieces):
            last = k == len(pieces) - 1
            sel = (s >= start) & ((s <= start + pc.length) | last)
            if k == 0:
                sel |= s < 0
            out[sel] = pc.point(np.clip(s[sel] - start, 0.0, pc.length))
            start += pc.length
        return out

    def horizon(self, lam: float) -> float:
        return float(self.horizon_scale * lam ** self.horizon_power)

    # -- motion -----------------------------------------------------------

    def front(self, t) -> tuple[np.ndarray, np.ndarray]:
        """``(s_left(t), s_right(t))``."""
        s = self.samples
        t = np.asarray(t, dtype=float)
        if len(s) == 1:
            return np.full(t.shape, s[0, 1]), np.full(t.shape, s[0, 2])
        return np.interp(t, s[:, 0], s[:, 1]), np.interp(t, s[:, 0], s[:, 2])

    def passage_time(self, s) -> np.ndarray:
        """First time the barrier point at arclength ``s`` is swept (``inf`` if never)."""
        s = np.asarray(s, dtype=float)
        L = self.barrier_length
        left = _first_reach(self.samples[:, 0], self.samples[:, 1], s)
        right = _first_reach(self.samples[:, 0], self.samples[:, 2], L - s)
        return np.minimum(left, right)

    def corner_jump(self) -> tuple[float, float]:
        """Passage time just beyond each corner; positive for a static start."""
        eps = 1e-12 * self.barrier_length
        L = self.barrier_length
        return float(self.passage_time(eps)), float(self.passage_time(L - eps))


def _first_reach(t: np.ndarray, a: np.ndarray, s) -> np.ndarray:
    """``inf {t : a(t) >= s}`` for piecewise linear ``a`` (monotone envelope)."""
    s = np.asarray(s, dtype=float)
    env = np.maximum.accumulate(a)
    i = np.searchsorted(env, s, side="left")
    out = np.full(s.shape, np.inf)
    at_start = (i == 0) & (s <= env[0])
    out[at_start] = t[0]
    mid = (i > 0) & (i < len(env))
    if mid.any():
        j = i[mid]
        a0, a1 = env[j - 1], env[j]
        t0, t1 = t[j - 1], t[j]
        out[mid] = t0 + (s[mid] - a0) / (a1 - a0) * (t1 - t0)
    return out


# ---------------------------------------------------------------------------
# hypotheses


@dataclass
class HypothesisReport:
    results: dict[str, tuple[bool, str]]

    @property
    def passed(self) -> bool:
        return all(ok for ok, _ in self.results.values())

    def failed(self) -> list[str]:
        return [k for k, (ok, _) in self.results.items() if not ok]

    def to_dict(self) -> dict:
        return {k: {"passed": ok, "detail": msg} for k, (ok, msg) in self.results.items()}


def validate_hypotheses(spec: BoundaryMotionSpec) -> HypothesisReport:
    """Check the six standing hypotheses on the sampled data."""
    res: dict[str, tuple[bool, str]] = {}
    # (1) closed chain of smooth pieces, corners where sigma meets sigma_prime
    sig, bar = spec.sigma, spec.sigma_prime
    closed = len(sig) == 1 and len(bar) >= 1
    if closed:
        ends = [np.asarray(p.end) for p in bar[:-1]]
        starts = [np.asarray(p.start) for p in bar[1:]]
        closed = all(np.linalg.norm(e - s) < 1e-9 for e, s in zip(ends, starts))
        closed &= np.linalg.norm(np.subtract(bar[0].start, sig[0].start)) < 1e-9
        closed &= np.linalg.norm(np.subtract(bar[-1].end, sig[0].end)) < 1e-9
    res["1_decomposition"] = (bool(closed), "sigma and sigma_prime share both corners" if closed
                              else "pieces do not form a closed chain")
    # (2) strict mean convexity and convex corners
    conv = validate_mean_convex(spec.domain)
    res["2_mean_convex"] = (conv.passed, f"min curvature {conv.min_curvature:.4g}, "
                            f"corner angles {[round(a, 4) for a in conv.corner_angles]}")
    # (3) sampled motion starting at the corners
    s = spec.samples
    t_ok = bool(np.all(np.diff(s[:, 0]) > 0)) and s[0, 0] == 0.0
    start_ok = bool(np.all(s[0, 1:] == 0.0))
    res["3_motion_start"] = (t_ok and start_ok,
                             "times increase from 0 and the motion starts at the corners"
                             if t_ok and start_ok else "times must increase from 0 with s(0) = 0")
    # (4) monotone fronts that never cross
    L = spec.barrier_length
    mono = bool(np.all(np.diff(s[:, 1]) >= 0) and np.all(np.diff(s[:, 2]) >= 0))
    inside = bool(np.all(s[:, 1] >= 0) and np.all(s[:, 2] >= 0) and np.all(s[:, 1] + s[:, 2] <= L))
    inside &= spec.limit[0] + spec.limit[1] <= L
    res["4_monotone"] = (mono and inside, "parameters nondecreasing, fronts ordered" if mono and inside
                         else ("a parameter decreases" if not mono else "fronts leave the barrier or cross"))
    # (5) a straight initial curve must start moving at once
    straight = all(np.isinf(p.radius) for p in sig)
    if straight:
        moves = len(s) > 1 and bool(np.any(s[1, 1:] > 0))
        res["5_minimal_start"] = (moves, "straight initial curve with immediate motion" if moves
                                  else "straight initial curve but the boundary is static at t = 0")
    else:
        res["5_minimal_start"] = (True, "initial curve is not minimal")
    # (6) convergence to the limit with vanishing rate
    lim_ok = abs(s[-1, 1] - spec.limit[0]) <= 1e-9 * max(L, 1) and abs(s[-1, 2] - spec.limit[1]) <= 1e-9 * max(L, 1)
    if len(s) > 1:
        rate = float(np.max(np.abs(s[-1, 1:] - s[-2, 1:]) / (s[-1, 0] - s[-2, 0])))
    else:
        rate = 0.0
    settled = rate <= spec.settle_tol
    res["6_convergence"] = (bool(lim_ok and settled),
                            f"final rate {rate:.3g}" + ("" if lim_ok else ", last sample differs from the limit"))
    return HypothesisReport(res)


# ---------------------------------------------------------------------------
# staircase trace


@dataclass
class StaircaseData:
    """Dirichlet trace of the staircase at one ``lam``.

    ``arc`` samples the trace along the boundary (rows of piece label,
    arclength, point, value, certificate).  ``node_values`` holds the trace
    at the boundary nodes of a grid when one was supplied.
    """

    lam: float
    T: float
    collar: float
    spec: BoundaryMotionSpec
    arc: list[tuple[str, float, float, float, float, str]]
    node_values: np.ndarray | None = None
    certificate: dict[tuple[int, int], str] | None = None

    def __call__(self, x0, x1) -> np.ndarray:
        return staircase_trace(self.spec, self.lam, x0, x1, self.T)

    def rows(self) -> list[dict]:
        return [{"piece": p, "s": s, "x0": a, "x1": b, "value": v, "certificate": c}
                for p, s, a, b, v, c in self.arc]


def _barrier_value(spec: BoundaryMotionSpec, lam: float, s: np.ndarray, T: float) -> np.ndarray:
    L = spec.barrier_length
    tau = np.minimum(spec.passage_time(s), T)
    to_corner = np.minimum(s, L - s)
    return lam * tau * smoothstep(lam * to_corner)


def staircase_trace(spec: BoundaryMotionSpec, lam: float, x0, x1, horizon: float | None = None) -> np.ndarray:
    """Trace value at the boundary point closest to each ``(x0, x1)``."""
    T = spec.horizon(lam) if horizon is None else float(horizon)
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    shape = np.broadcast(x0, x1).shape
    pts = np.column_stack([np.broadcast_to(x0, shape).ravel(), np.broadcast_to(x1, shape).ravel()])
    best = np.full(len(pts), np.inf)
    on_sigma = np.zeros(len(pts), dtype=bool)
    s_bar = np.zeros(len(pts))
    for pc in spec.sigma:
        _, d = pc.project(pts)
        closer = d < best
        best[closer] = d[closer]
        on_sigma[closer] = True
    start = 0.0
    for pc in spec.sigma_prime:
        s, d = pc.project(pts)
        closer = d < best
        best[closer] = d[closer]
        on_sigma[closer] = False
        s_bar[closer] = start + s[closer]
        start += pc.length
    vals = np.where(on_sigma, 0.0, _barrier_value(spec, lam, s_bar, T))
    return vals.reshape(shape)


def staircase(spec: BoundaryMotionSpec, lam: float, grid: Grid | None = None,
              mask: ScalarField | None = None, spacing: float | None = None,
              horizon: float | None = None) -> StaircaseData:
    """Build the staircase trace for one ``lam``.

    Boundary nodes nearest to a corner where the trace jumps carry the
    certificate ``segment`` (the unsmoothed staircase has a vertical
    segment there); every other node is a ``point``.  ``horizon`` overrides
    the rule ``T(lam)``.
    """
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    T = spec.horizon(lam) if horizon is None else float(horizon)
    collar = 1.0 / lam
    jumps = spec.corner_jump()
    corners = spec.corners
    if spacing is None:
        spacing = min(collar / 8.0, spec.barrier_length / 2000.0)
    arc = []
    for pc in spec.sigma:
        k = max(int(np.ceil(pc.length / spacing)), 2)
        for s in np.linspace(0.0, pc.length, k + 1):
            x = pc.point(s)
            arc.append((pc.label, float(s), float(x[0]), float(x[1]), 0.0, "point"))
    L = spec.barrier_length
    k = max(int(np.ceil(L / spacing)), 2)
    sb = np.linspace(0.0, L, k + 1)
    xs = spec.barrier_point(sb)
    vb = _barrier_value(spec, lam, sb, T)
    for s, x, v in zip(sb, xs, vb):
        cert = "point"
        if (s == 0.0 and jumps[0] > 0) or (s == L and jumps[1] > 0):
            cert = "segment"
        arc.append(("sigma_prime", float(s), float(x[0]), float(x[1]), float(v), cert))
    data = StaircaseData(float(lam), T, collar, spec, arc)
    if grid is not None:
        if mask is None:
            mask = build_mask(spec.domain, grid)
        X0, X1 = grid.coords()
        bnd = mask.mask == BOUNDARY
        vals = np.zeros(grid.shape)
        vals[bnd] = staircase_trace(spec, lam, X0[bnd], X1[bnd], T)
        cert = {tuple(int(i) for i in n): "point" for n in np.argwhere(bnd)}
        for c, jump in zip(corners, jumps):
            if jump > 0:
                idx = np.argwhere(bnd)
                d = np.hypot(X0[bnd] - c[0], X1[bnd] - c[1])
                cert[tuple(int(i) for i in idx[int(np.argmin(d))])] = "segment"
        data.node_values = vals
        data.certificate = cert
    return data


# ---------------------------------------------------------------------------
# solve


@dataclass
class BoundaryFlowResult:
    ladder: LadderResult
    u: ScalarField
    horizon: float
    not_reached: np.ndarray
    staircases: list[StaircaseData]
    seconds: float

    def summary(self) -> dict:
        reached = (self.u.mask == INTERIOR) & ~self.not_reached
        return {"lambda": self.ladder.schedule[-1], "horizon": self.horizon,
                "reached_nodes": int(reached.sum()),
                "not_reached_nodes": int(self.not_reached.sum()),
                "ladder_differences": self.ladder.differences,
                "members": self.ladder.summaries}


def _warm_start(prev_u: np.ndarray, T_prev: float, T_new: float) -> np.ndarray:
    """Lift the unreached plateau from the old horizon to the new one."""
    w = np.clip(prev_u / T_prev, 0.0, 1.0) ** 2
    return prev_u + (T_new - T_prev) * w


def _horizon_ramp(T_from: float, T_to: float) -> list[float]:
    """Horizons growing by factors of 4 from near ``T_from`` up to ``T_to``."""
    steps = max(int(np.ceil(np.log(T_to / T_from) / np.log(HORIZON_FACTOR))), 0)
    return [T_to / HORIZON_FACTOR ** k for k in range(steps, 0, -1)] + [T_to]


def _solve_member(spec: BoundaryMotionSpec, grid: Grid, mask: ScalarField, lam: float, prev,
                  tol: float, max_iter: int):
    """Solve one ladder member, continuing in the horizon when needed.

    The first member starts from zero with the horizon raised from
    ``START_HORIZON``; later members warm-start from the previous one and
    fall back to such a ramp only if the direct solve fails.
    """
    T = spec.horizon(lam)
    if prev is None:
        ramps = [_horizon_ramp(min(START_HORIZON, T), T)]
    else:
        T_prev = spec.horizon(prev.lam)
        ramps = [[T], _horizon_ramp(min(T_prev, T), T)]
    for attempt, ramp in enumerate(ramps):
        last, T_last = prev, None if prev is None else spec.horizon(prev.lam)
        try:
            for Tk in ramp:
                st = staircase(spec, lam, grid, mask, horizon=Tk)
                init = None
                if last is not None:
                    init = last.f.with_values(lam * _warm_start(last.f.values / last.lam, T_last, Tk))
                last = solve_translator_graph(spec.domain, grid, lam, st, init=init, tol=tol,
                                              max_iter=max_iter, check_domain=False, mask=mask)
                T_last = Tk
            return last, st
        except NonConvergenceError:
            if attempt == len(ramps) - 1:
                raise
            logger.info("lambda=%g: direct solve failed, ramping the horizon", lam)
    raise AssertionError("unreachable")


def solve_boundary_flow(spec: BoundaryMotionSpec, grid: Grid, schedule: Sequence[float],
                        tol: float = DEFAULT_TOL, max_iter: int = 400, validate: bool = True,
                        probe: np.ndarray | None = None, reach_fraction: float = 0.5) -> BoundaryFlowResult:
    """Translator ladder with staircase boundary data.

    Returns ``u_lambda = f_lambda / lambda`` for each member; the last one is
    the arrival-time estimate.  Nodes with ``u >= reach_fraction * T`` are
    flagged as not reached.  With ``validate`` the hypotheses must hold.
    The default probe set for the ladder differences keeps a distance
    ``PROBE_GAP`` from every member's unreached set.
    """
    if validate:
        report = validate_hypotheses(spec)
        if not report.passed:
            raise HypothesisError("hypotheses fail: " + ", ".join(report.failed()))
    schedule = [float(s) for s in schedule]
    if not schedule or any(s <= 0 for s in schedule) or any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ParameterError("lambda schedule must be strictly increasing and positive")
    t0 = time.perf_counter()
    mask = build_mask(spec.domain, grid)
    sols, stairs = [], []
    prev = None
    for lam in schedule:
        try:
            sol, st = _solve_member(spec, grid, mask, lam, prev, tol, max_iter)
        except (NonConvergenceError, ParameterError) as exc:
            raise LadderError(lam, exc, sols) from exc
        logger.info("boundary flow lambda=%g: %d steps, residual %.2e", lam, sol.iterations, sol.residual)
        sols.append(sol)
        stairs.append(st)
        prev = sol
    fields = [u_lambda(s) for s in sols]
    flags = [(f.mask != 0) & (f.values >= reach_fraction * spec.horizon(s.lam)) for f, s in zip(fields, sols)]
    if probe is None:
        # compact part of the reached region, away from the unreached set of every member
        unreached = np.logical_or.reduce(flags)
        far = ndimage.distance_transform_edt(~unreached, sampling=grid.spacing) >= PROBE_GAP
        probe = probe_mask(spec.domain, grid, mask.mask) & far
    ladder = ladder_result(schedule, sols, probe)
    u = fields[-1]
    T = spec.horizon(schedule[-1])
    not_reached = flags[-1]
    return BoundaryFlowResult(ladder, u, T, not_reached, stairs, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# limit curve


@dataclass
class LimitCurve:
    points: np.ndarray
    straightness: float

    def hausdorff_to_segment(self, a, b, samples: int = 2001) -> float:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        d1 = float(_point_segment_distance(self.points, a, b).max())
        seg = a + np.linspace(0.0, 1.0, samples)[:, None] * (b - a)
        d2 = float(_polyline_distance(seg, self.points).max())
        return max(d1, d2)

    def rows(self) -> list[dict]:
        return [{"x0": float(p[0]), "x1": float(p[1])} for p in self.points]


def _point_segment_distance(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    t = np.zeros(len(pts)) if L2 == 0 else np.clip((pts - a) @ d / L2, 0.0, 1.0)
    return np.linalg.norm(pts - (a + t[:, None] * d), axis=1)


def _polyline_distance(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    if len(poly) == 1:
        return np.linalg.norm(pts - poly[0], axis=1)
    return np.min([_point_segment_distance(pts, p, q) for p, q in zip(poly[:-1], poly[1:])], axis=0)


def _boundary_hit(level, p: np.ndarray, q: np.ndarray, steps: int = 48) -> np.ndarray:
    """Point where the segment ``p -> q`` leaves the domain (``p`` inside or on it)."""
    lo, hi = 0.0, 1.0
    if level(*p) > 0:
        return p
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        x = p + mid * (q - p)
        if level(x[0], x[1]) <= 0:
            lo = mid
        else:
            hi = mid
    return p + lo * (q - p)


def limit_surface(spec: BoundaryMotionSpec, u: ScalarField, horizon: float,
                  reach_fraction: float = 0.5) -> LimitCurve:
    """Polyline separating reached from unreached nodes, column by column.

    Along each grid column the crossing of ``u = reach_fraction * T`` between a reached
    and an unreached node is located by linear interpolation.  When the
    reached node is a boundary node on ``sigma`` only the boundary itself is
    reached, and the crossing is placed on the boundary.  Reached boundary
    nodes on the barrier (the smoothed corner collar) are ignored.  The
    limiting boundary points close the polyline.
    """
    grid = u.grid
    X0, X1 = grid.coords()
    level = spec.domain.level
    thr = reach_fraction * horizon
    inside = u.mask != 0
    vals = u.values
    bnd = u.mask == BOUNDARY
    on_bar = np.zeros(grid.shape, dtype=bool)
    if bnd.any():
        pts = np.column_stack([X0[bnd], X1[bnd]])
        d_sig = np.min([pc.project(pts)[1] for pc in spec.sigma], axis=0)
        d_bar = np.min([pc.project(pts)[1] for pc in spec.sigma_prime], axis=0)
        on_bar[bnd] = d_bar < d_sig
    reached = inside & (vals < thr) & ~on_bar
    if not reached.any():
        raise DegenerateOutputError("no node is reached")
    out = []
    for i in range(grid.shape[0]):
        col = np.flatnonzero(inside[i])
        for j0, j1 in zip(col[:-1], col[1:]):
            if j1 != j0 + 1:
                continue
            a, b = (i, j0), (i, j1)
            ra, rb = reached[a], reached[b]
            unreached_a = not ra and not on_bar[a]
            unreached_b = not rb and not on_bar[b]
            if not ((ra and unreached_b) or (rb and unreached_a)):
                continue
            r, n = (a, b) if ra else (b, a)
            pr = np.array([X0[r], X1[r]])
            pn = np.array([X0[n], X1[n]])
            if u.mask[r] == BOUNDARY:
                out.append(_boundary_hit(level, pn, pr))
            else:
                w = (thr - vals[r]) / (vals[n] - vals[r])
                out.append(pr + np.clip(w, 0.0, 1.0) * (pn - pr))
    if not out:
        raise DegenerateOutputError("no reached/unreached interface found")
    pts = np.array(sorted(out, key=lambda p: (p[0], p[1])))
    ends = spec.barrier_point([spec.limit[0], spec.barrier_length - spec.limit[1]])
    pts = np.vstack([ends[0], pts, ends[1]])
    straight = float(_point_segment_distance(pts, pts[0], pts[-1]).max())
    return LimitCurve(pts, straight)
