"""Translating solitons as graphs: residual, weighted area and stationarity.

A hypersurface ``M`` translates with velocity ``v`` under mean curvature
flow iff its mean curvature vector equals the normal part of ``v``.  For a
graph ``y = f(x)`` with upward unit normal ``(-Df, 1) / W`` this is

    div(Df / W) = (v_up - v_h . Df) / W,      W = sqrt(1 + |Df|^2),

which is also the Euler-Lagrange equation of the weighted area
``E[f] = int exp(v . x) dA``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .mesh import BOUNDARY, INTERIOR, Grid, ScalarField, gradient_field, hessian_field, stencil_ok

FAMILIES = ("grim_reaper", "bowl", "numeric_graph")
OVERFLOW_EXPONENT = 600.0


class ParameterError(ValueError):
    pass


class NumericError(RuntimeError):
    def __init__(self, message: str, last_radius: float):
        super().__init__(f"{message} (last good radius {last_radius:g})")
        self.last_radius = last_radius


@dataclass(frozen=True)
class TranslatorSpec:
    """A translating graph: its velocity, dimension and profile."""

    velocity: tuple[float, ...]
    m: int
    family: str
    params: dict = field(default_factory=dict)
    profile: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    dense: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = tuple(float(x) for x in self.velocity)
        object.__setattr__(self, "velocity", v)
        if not np.isfinite(v).all() or math.hypot(*v) == 0:
            raise ParameterError("velocity must be finite and nonzero")
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown translator family {self.family!r}")
        if self.m not in (1, 2):
            raise ParameterError("surface dimension must be 1 or 2")
        if self.family == "grim_reaper" and self.m != 1:
            raise ParameterError("the grim reaper is a curve (m = 1)")
        if self.family == "bowl" and self.m != 2:
            raise ParameterError("the bowl is a surface (m = 2)")

    @property
    def speed(self) -> float:
        return self.velocity[-1]

    def height(self, x) -> np.ndarray:
        """Profile value at ``x`` (distance from the axis for the bowl)."""
        x = np.asarray(x, dtype=float)
        c = self.speed
        if self.family == "grim_reaper":
            return -np.log(np.cos(c * x)) / c
        if self.dense is not None:
            return self.dense(np.abs(x))[0]
        r, phi, _ = self.profile
        return np.interp(np.abs(x), r, phi)

    def slope(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        c = self.speed
        if self.family == "grim_reaper":
            return np.tan(c * x)
        if self.dense is not None:
            return np.sign(x) * self.dense(np.abs(x))[1]
        r, _, dphi = self.profile
        return np.sign(x) * np.interp(np.abs(x), r, dphi)

    def surface(self, grid: Grid, mask: np.ndarray | None = None) -> "GraphSurface":
        """Sample the profile on ``grid`` (``line`` or ``radial`` for the exact families)."""
        if self.family == "grim_reaper" and grid.kind != "line":
            raise ParameterError("sample the grim reaper on a line grid")
        if self.family == "bowl" and grid.kind not in ("radial", "cartesian2d"):
            raise ParameterError("sample the bowl on a radial or cartesian grid")
        if grid.kind == "cartesian2d":
            X, Y = grid.coords()
            vals = self.height(np.hypot(X, Y))
        else:
            vals = self.height(grid.coords()[0])
        return GraphSurface(ScalarField(grid, vals, mask))


@dataclass(frozen=True)
class GraphSurface:
    """Graph of a scalar field, oriented by the upward normal."""

    base: ScalarField
    orientation: str = "up"

    def __post_init__(self):
        if self.orientation != "up":
            raise ParameterError("graphs are oriented by the upward normal")

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def ambient_dim(self) -> int:
        return 3 if self.grid.kind == "radial" else self.grid.ndim + 1

    def with_values(self, values: np.ndarray) -> "GraphSurface":
        return GraphSurface(self.base.with_values(values), self.orientation)


@dataclass(frozen=True)
class ScaledValue:
    """``mantissa * exp(exponent)`` for weighted areas beyond float range."""

    mantissa: float
    exponent: float

    def log(self) -> float:
        return math.log(self.mantissa) + self.exponent

    def __float__(self) -> float:
        try:
            return self.mantissa * math.exp(self.exponent)
        except OverflowError:
            return math.inf


def _split_velocity(surface: GraphSurface, v: Sequence[float]) -> tuple[np.ndarray, float]:
    v = np.asarray(v, dtype=float)
    if v.shape != (surface.ambient_dim,):
        raise ParameterError(f"velocity must have {surface.ambient_dim} components")
    vh, vup = v[:-1], float(v[-1])
    if surface.grid.kind == "radial" and np.any(vh != 0):
        raise ParameterError("radial graphs only support vertical velocity")
    return vh, vup


def _slopes(surface: GraphSurface) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradient components, their squared norm and the Hessian, per node."""
    grid = surface.grid
    f = surface.base.values
    p = gradient_field(f, grid)
    H = hessian_field(f, grid)
    return p, (p ** 2).sum(axis=0), H


def _edge_gradient(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Central gradient with second-order one-sided rows on the array edges."""
    out = gradient_field(values, grid)
    for a in range(grid.ndim):
        if grid.shape[a] < 3:
            continue
        one_sided = np.gradient(values, grid.spacing[a], axis=a, edge_order=2)
        first = 1 if (a == 0 and grid.has_axis) else 0
        idx = [slice(None)] * grid.ndim
        for k in ([0, -1] if first == 0 else [-1]):
            idx[a] = k
            out[(a,) + tuple(idx)] = one_sided[tuple(idx)]
    return out


def _mean_curvature(surface: GraphSurface) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``div(Df / W)`` in non-divergence form, plus ``Df`` and ``W``."""
    grid = surface.grid
    p, p2, H = _slopes(surface)
    W = np.sqrt(1.0 + p2)
    if grid.kind == "radial":
        r = grid.coords()[0]
        frr = H[0, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            rot = np.where(r == 0, frr, p[0] / np.where(r == 0, 1.0, r))
        div = frr / W ** 3 + rot / W
        return div, p, W
    lap = np.trace(H, axis1=0, axis2=1) if grid.ndim > 1 else H[0, 0]
    pHp = np.einsum("i...,ij...,j...->...", p, H, p)
    div = (lap - pHp / W ** 2) / W
    return div, p, W


def translator_residual(surface: GraphSurface, v: Sequence[float]) -> ScalarField:
    """``div(Df/W) - v_up/W + v_h . Df / W`` at nodes with a full stencil.

    Nodes without a stencil are returned as boundary nodes with value 0.
    """
    vh, vup = _split_velocity(surface, v)
    div, p, W = _mean_curvature(surface)
    rhs = vup / W
    if surface.grid.kind != "radial":
        rhs = rhs - np.einsum("i,i...->...", vh, p) / W
    res = div - rhs
    ok = stencil_ok(surface.base.mask, surface.grid)
    mask = np.where(ok, INTERIOR, np.where(surface.base.mask == 0, 0, BOUNDARY))
    return ScalarField(surface.grid, np.where(ok, res, 0.0), mask)


def _log_terms(surface: GraphSurface, v: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    vh, vup = _split_velocity(surface, v)
    grid = surface.grid
    p = _edge_gradient(surface.base.values, grid)
    p2 = (p ** 2).sum(axis=0)
    expo = vup * surface.base.values
    if grid.kind != "radial":
        X = grid.coords()
        expo = expo + sum(c * x for c, x in zip(vh, X))
    dA = np.sqrt(1.0 + p2) * grid.cell_measure()
    sel = surface.base.mask == INTERIOR
    return expo[sel], dA[sel]


def weighted_area(surface: GraphSurface, v: Sequence[float]):
    """Midpoint sum of ``exp(v . x) W dx`` over interior nodes.

    Returns a float, or a :class:`ScaledValue` when ``|v . x|`` exceeds the
    overflow guard somewhere on the surface.
    """
    expo, dA = _log_terms(surface, v)
    if expo.size == 0:
        return 0.0
    top = float(expo.max())
    mant = float(np.sum(np.exp(expo - top) * dA))
    if float(np.abs(expo).max()) > OVERFLOW_EXPONENT:
        return ScaledValue(mant, top)
    return mant * math.exp(top)


def _bump_1d(x, center, width):
    s = (x - center) / width
    return np.where(np.abs(s) < 1, (1 - s * s) ** 2, 0.0)


def random_bump(surface: GraphSurface, rng: np.random.Generator, tries: int = 200) -> np.ndarray:
    """Smooth bump supported on nodes with a full stencil.

    Product of one-dimensional quartic bumps; centre and half-widths are
    drawn at random and shrunk until the support fits.
    """
    grid = surface.grid
    ok = stencil_ok(surface.base.mask, grid)
    X = grid.coords()
    inside = [x[ok] for x in X]
    lo = [float(x.min()) for x in inside]
    hi = [float(x.max()) for x in inside]
    for _ in range(tries):
        centre = [rng.uniform(a + 0.3 * (b - a), b - 0.3 * (b - a)) for a, b in zip(lo, hi)]
        if grid.kind == "radial":
            centre[0] = 0.0 if rng.random() < 0.5 else centre[0]
        widths = [rng.uniform(0.15, 0.3) * (b - a) for a, b in zip(lo, hi)]
        eta = np.ones(grid.shape)
        for x, c, w in zip(X, centre, widths):
            eta = eta * _bump_1d(x, c, w)
        support = eta > 0
        if support.any() and not (support & ~ok).any():
            return eta
    raise RuntimeError("could not place a bump inside the surface")


def stationarity_check(surface: GraphSurface, v: Sequence[float], trials: int = 8,
                       seed: int = 0) -> float:
    """Largest centred-difference derivative of the weighted area along bumps."""
    if trials < 1:
        raise ParameterError("need at least one trial")
    rng = np.random.default_rng(seed)
    f = surface.base.values
    scale = max(1.0, float(np.abs(f[surface.base.mask != 0]).max()))
    eps = np.finfo(float).eps ** (1.0 / 3.0) * scale
    worst = 0.0
    for _ in range(trials):
        eta = random_bump(surface, rng)
        plus = _energy_log(surface.with_values(f + eps * eta), v)
        minus = _energy_log(surface.with_values(f - eps * eta), v)
        worst = max(worst, abs(plus - minus) / (2 * eps))
    return worst


def _energy_log(surface: GraphSurface, v) -> float:
    e = weighted_area(surface, v)
    return float(e) if not isinstance(e, ScaledValue) else float(e)


def hzero_check(surface: GraphSurface, v: Sequence[float], sizes: Sequence[int] | None = None) -> dict:
    """Check that ``H . nu = v_up / W`` has no interior minimum on centred subgrids.

    For every half-width ``k`` in ``sizes`` the subgrid of nodes within ``k``
    steps of the centre is scanned; the check passes when its minimum is
    attained on the subgrid's relative boundary.
    """
    _, vup = _split_velocity(surface, v)
    grid = surface.grid
    _, p2, _ = _slopes(surface)
    hn = vup / np.sqrt(1.0 + p2)
    ok = stencil_ok(surface.base.mask, grid)
    if grid.kind == "radial":
        centre = (0,)
    else:
        centre = tuple(n // 2 for n in grid.shape)
    limit = min(min(c, n - 1 - c) for c, n in zip(centre, grid.shape)) if grid.kind != "radial" else grid.shape[0] - 2
    if sizes is None:
        sizes = sorted({max(2, int(limit * t)) for t in (0.25, 0.5, 0.75, 1.0)})
    results = []
    for k in sizes:
        if k > limit:
            continue
        sl = tuple(slice(max(c - k, 0), c + k + 1) for c in centre)
        sub = hn[sl]
        if not ok[sl].all():
            continue
        edge = np.ones(sub.shape, dtype=bool)
        inner = tuple(slice(1 if c - k > 0 else 0, -1) for c in centre)
        edge[inner] = False
        results.append({"half_width": int(k), "passed": bool(sub[edge].min() <= sub[~edge].min() + 1e-12)
                        if (~edge).any() else True})
    return {"passed": all(r["passed"] for r in results), "subgrids": results}


# ---------------------------------------------------------------------------
# exact families


def grim_reaper(c: float = 1.0) -> TranslatorSpec:
    """The curve ``y = -log(cos(c x)) / c`` on ``|x| < pi / (2 c)``, velocity ``(0, c)``."""
    if not c > 0:
        raise ParameterError("speed must be positive")
    return TranslatorSpec((0.0, float(c)), 1, "grim_reaper", {"c": float(c), "half_width": math.pi / (2 * c)})


def bowl(c: float = 1.0, max_radius: float = 10.0, samples: int = 2001, rtol: float = 1e-12) -> TranslatorSpec:
    """Rotationally symmetric entire translator through the origin.

    Integrates ``phi'' / (1 + phi'^2) + phi' / r = c`` outward from the axis
    with the adaptive eighth-order Dormand-Prince pair.  The singular start is
    bridged with the series ``phi = c r^2 / 4 + O(r^4)``.
    """
    if not c > 0 or not max_radius > 0:
        raise ParameterError("speed and radius must be positive")
    r0 = min(1e-4 / c, 1e-3 * max_radius)

    def rhs(r, y):
        p = y[1]
        return [p, (1 + p * p) * (c - p / r)]

    y0 = [c * r0 ** 2 / 4 + c ** 3 * r0 ** 4 / 64, c * r0 / 2 + c ** 3 * r0 ** 3 / 16]
    sol = solve_ivp(rhs, (r0, max_radius), y0, method="DOP853", rtol=rtol, atol=1e-13, dense_output=True)
    if not sol.success:
        raise NumericError(f"bowl integration failed: {sol.message}", float(sol.t[-1]))
    r = np.linspace(0.0, max_radius, samples)
    inner = sol.sol

    def dense(x):
        x = np.asarray(x, dtype=float)
        near = x < r0
        xs = np.where(near, r0, x)
        phi, dphi = inner(xs)
        phi = np.where(near, c * x ** 2 / 4 + c ** 3 * x ** 4 / 64, phi)
        dphi = np.where(near, c * x / 2 + c ** 3 * x ** 3 / 16, dphi)
        return np.stack([phi, dphi])

    phi, dphi = dense(r)
    return TranslatorSpec((0.0, 0.0, float(c)), 2, "bowl", {"c": float(c), "max_radius": float(max_radius)},
                          profile=(r, phi, dphi), dense=dense)


def numeric_graph(field: ScalarField, velocity: Sequence[float]) -> TranslatorSpec:
    """Wrap a computed graph (e.g. a regularized solution) as a translator candidate."""
    m = 1 if field.grid.kind == "line" else 2
    x = field.grid.coords()[0]
    prof = None
    if field.grid.ndim == 1:
        prof = (x, np.asarray(field.values), gradient_field(field.values, field.grid)[0])
    return TranslatorSpec(tuple(velocity), m, "numeric_graph", {}, profile=prof)


def soliton_study(spec: TranslatorSpec, sizes: Sequence[int] = (1024, 2048), extent: float | None = None,
                  trials: int = 8, seed: int = 0) -> dict:
    """Residual refinement study and stationarity of an exact translator.

    The grim reaper is sampled on ``|x| <= extent`` (default three quarters
    of its half-width), the bowl on ``0 <= r <= extent`` (default ``4 / c``).
    Orders are ``log2`` ratios of successive sup-norm residuals per halving
    of the spacing; stationarity is relative to the weighted area on the
    finest grid.
    """
    c = spec.speed
    sizes = [int(n) for n in sizes]
    if spec.family == "grim_reaper":
        extent = 0.75 * math.pi / (2 * c) if extent is None else float(extent)
        grids = [Grid.from_extents("line", (-extent,), (extent,), (n,)) for n in sizes]
    elif spec.family == "bowl":
        extent = 4.0 / c if extent is None else float(extent)
        grids = [Grid("radial", (n + 1,), (extent / n,), (0.0,)) for n in sizes]
    else:
        raise ParameterError("refinement studies need an exact family")
    residuals, surfaces = [], []
    for g in grids:
        s = spec.surface(g)
        surfaces.append(s)
        residuals.append(float(np.abs(translator_residual(s, spec.velocity).values).max()))
    orders = [math.log(a / b) / math.log((n2 - 1) / (n1 - 1) if spec.family == "grim_reaper" else n2 / n1)
              for a, b, n1, n2 in zip(residuals, residuals[1:], sizes, sizes[1:])]
    finest = surfaces[-1]
    area = float(weighted_area(finest, spec.velocity))
    stat = float(stationarity_check(finest, spec.velocity, trials=trials, seed=seed)) / area
    return {"family": spec.family, "speed": c, "extent": extent, "sizes": sizes,
            "residuals": residuals, "orders": orders, "weighted_area": area,
            "stationarity": stat}


def profile_rows(spec: TranslatorSpec, extent: float | None = None, samples: int = 401) -> list[tuple]:
    """``(r, phi, phi_prime)`` rows of the profile on ``0 <= r <= extent``."""
    c = spec.speed
    if extent is None:
        extent = 0.75 * math.pi / (2 * c) if spec.family == "grim_reaper" else 4.0 / c
    r = np.linspace(0.0, extent, samples)
    return [(float(a), float(b), float(d)) for a, b, d in zip(r, spec.height(r), spec.slope(r))]
