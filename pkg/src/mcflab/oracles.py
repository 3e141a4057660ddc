"""Independent reference solutions used to check the grid solvers.

None of these reuse the finite-difference machinery: the radial translator
is an ODE integrated with an implicit Runge-Kutta method, and the curve
shortening reference is a front-tracking polyline scheme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class RadialProfile:
    """Rotationally symmetric translator ``f(rho)`` on the unit ball with ``f(1) = 0``."""

    lam: float
    n: int
    rho: np.ndarray
    f: np.ndarray
    slope: np.ndarray

    def __call__(self, rho) -> np.ndarray:
        return np.interp(np.abs(rho), self.rho, self.f)

    def u(self, rho) -> np.ndarray:
        return self(rho) / self.lam


def radial_translator(lam: float, n: int = 2, radius: float = 1.0, rtol: float = 1e-10,
                      points: int = 4001) -> RadialProfile:
    """Shoot the radial graph equation from the centre.

    With ``p = f'`` the equation reads ``p' = -(1 + p^2) (lam + (n - 1) p / rho)``
    and ``p(0) = 0``.  Near the centre ``p ~ -lam rho / n``; the profile is
    started from that series and shifted so that it vanishes at ``radius``.
    """
    if lam <= 0 or n < 2:
        raise ValueError("need lam > 0 and n >= 2")
    rho0 = min(1e-6, 1e-3 / lam) * radius
    p0 = -lam * rho0 / n
    f0 = -lam * rho0 ** 2 / (2 * n)

    def rhs(rho, y):
        p = y[1]
        return [p, -(1 + p * p) * (lam + (n - 1) * p / rho)]

    grid = np.linspace(rho0, radius, points)
    sol = solve_ivp(rhs, (rho0, radius), [f0, p0], method="Radau", rtol=rtol,
                    atol=1e-12, t_eval=grid, dense_output=False)
    if not sol.success:
        raise RuntimeError(f"radial shooting failed: {sol.message}")
    rho = np.concatenate([[0.0], sol.t])
    f = np.concatenate([[0.0], sol.y[0]])
    p = np.concatenate([[0.0], sol.y[1]])
    f = f - f[-1]
    return RadialProfile(float(lam), int(n), rho, f, p)


# ---------------------------------------------------------------------------
# curve shortening flow of a polyline with pinned endpoints


@dataclass
class CurveFlow:
    times: np.ndarray
    curves: list[np.ndarray]


def _resample(pts: np.ndarray, count: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], count)
    return np.column_stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])])


def curve_shortening(points: np.ndarray, t_end: float, count: int = 201,
                     cfl: float = 0.2, snapshots: int = 11, endpoints=None) -> CurveFlow:
    """Evolve an open planar curve by curvature with prescribed endpoints.

    Explicit front tracking: each interior vertex moves by the discrete
    curvature vector ``x_ss`` and the curve is re-parametrized by arc length
    after every step.  The step is ``cfl * ds^2``.  The endpoints stay fixed
    unless ``endpoints(t)`` returns their positions ``(p_first, p_last)``.
    """
    pts = _resample(np.asarray(points, dtype=float), count)
    t = 0.0
    out_t = np.linspace(0.0, t_end, snapshots)
    curves = [pts.copy()]
    k = 1
    while k < len(out_t):
        ds = np.linalg.norm(np.diff(pts, axis=0), axis=1).mean()
        dt = min(cfl * ds * ds, out_t[k] - t)
        a = pts[:-2]
        b = pts[1:-1]
        c = pts[2:]
        la = np.linalg.norm(b - a, axis=1)[:, None]
        lc = np.linalg.norm(c - b, axis=1)[:, None]
        curv = 2.0 * ((c - b) / lc - (b - a) / la) / (la + lc)
        pts = pts.copy()
        pts[1:-1] += dt * curv
        if endpoints is not None:
            first, last = endpoints(t + dt)
            pts[0], pts[-1] = first, last
        pts = _resample(pts, count)
        t += dt
        if t >= out_t[k] - 1e-14:
            curves.append(pts.copy())
            k += 1
    return CurveFlow(out_t, curves)


def arc_points(center, radius: float, theta0: float, theta1: float, count: int = 201) -> np.ndarray:
    th = np.linspace(theta0, theta1, count)
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def spline_curvature(pts: np.ndarray) -> np.ndarray:
    """Signed curvature of a smooth polyline through a cubic spline in arc length."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    cx = CubicSpline(s, pts[:, 0])
    cy = CubicSpline(s, pts[:, 1])
    x1, y1 = cx(s, 1), cy(s, 1)
    x2, y2 = cx(s, 2), cy(s, 2)
    return (x1 * y2 - y1 * x2) / (x1 * x1 + y1 * y1) ** 1.5
