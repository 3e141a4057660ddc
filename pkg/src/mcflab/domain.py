"""Mean-convex domains, grid masks and convexity validation.

Supported families (``DomainSpec.kind``):

* ``disk``     -- disk (``n = 2``) or ball (``n = 3``, axisymmetric) of radius ``radius``.
* ``ellipse``  -- ellipse (``n = 2``) or spheroid (``n = 3``), semi-axes ``a`` (x / r) and ``b`` (y / z).
* ``axisym_dumbbell`` -- two spherical bulbs joined by a polynomial neck (``n = 3``).
* ``lens``     -- intersection of two disks (``n = 2``); ``flat_top`` replaces the upper arc by the chord.
* ``square``   -- axis-aligned square (``n = 2``), only meaningful as a negative example for
  the boundary-motion hypotheses.

Curvatures are evaluated analytically from each boundary parametrisation and
are signed with respect to the inward normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import ndimage

from .mesh import BOUNDARY, INTERIOR, OUTSIDE, Grid, ScalarField

KINDS = ("disk", "ellipse", "axisym_dumbbell", "lens", "square")

DEFAULTS: dict[str, dict[str, float]] = {
    "disk": {"radius": 1.0, "cx": 0.0, "cy": 0.0},
    "ellipse": {"a": 1.0, "b": 0.6, "cx": 0.0, "cy": 0.0},
    "axisym_dumbbell": {"bulb_radius": 1.0, "bulb_center": 2.0, "neck_radius": 0.35,
                        "neck_curvature": 0.05, "blend_width": 0.3},
    "lens": {"radius": 1.0, "offset": 0.8, "flat_top": 0.0},
    "square": {"side": 1.0, "cx": 0.0, "cy": 0.0},
}


class SpecificationError(ValueError):
    """Unsupported kind/dimension pair or invalid shape parameters."""


class ResolutionError(ValueError):
    """The grid cannot resolve the domain."""


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    n: int = 2
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecificationError(f"unknown domain kind {self.kind!r}")
        if self.n not in (2, 3):
            raise SpecificationError("ambient dimension must be 2 or 3")
        if self.kind in ("lens", "square") and self.n != 2:
            raise SpecificationError(f"{self.kind} domains only exist for n = 2")
        if self.kind == "axisym_dumbbell" and self.n != 3:
            raise SpecificationError("the dumbbell is a surface of revolution (n = 3)")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise SpecificationError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**DEFAULTS[self.kind], **{k: float(v) for k, v in self.params.items()}}
        object.__setattr__(self, "params", merged)
        p = merged
        for key in ("radius", "a", "b", "bulb_radius", "neck_radius", "side"):
            if key in p and not p[key] > 0:
                raise SpecificationError(f"{key} must be strictly positive")
        if self.kind == "axisym_dumbbell":
            if not p["neck_radius"] < p["bulb_radius"]:
                raise SpecificationError("neck radius must be smaller than the bulb radius")
            if not 0 < p["blend_width"] < p["bulb_radius"]:
                raise SpecificationError("blend width must lie in (0, bulb radius)")
            if p["bulb_center"] - p["bulb_radius"] + p["blend_width"] <= 0:
                raise SpecificationError("bulbs overlap; increase bulb_center")
        if self.kind == "lens" and not 0 <= p["offset"] < p["radius"]:
            raise SpecificationError("lens offset must lie in [0, radius)")
        if self.n == 3 and self.kind in ("disk", "ellipse") and (p["cx"] != 0.0):
            raise SpecificationError("axisymmetric bodies must be centred on the axis")

    def __getitem__(self, key: str) -> float:
        return self.params[key]

    @property
    def grid_kind(self) -> str:
        return "axisym_rz" if self.n == 3 else "cartesian2d"

    def bounding_box(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """``((lo0, hi0), (lo1, hi1))`` in grid axes; axis 0 is ``r`` when ``n = 3``."""
        p = self.params
        if self.kind == "disk":
            R = p["radius"]
            if self.n == 3:
                return (0.0, R), (p["cy"] - R, p["cy"] + R)
            return (p["cx"] - R, p["cx"] + R), (p["cy"] - R, p["cy"] + R)
        if self.kind == "ellipse":
            if self.n == 3:
                return (0.0, p["a"]), (p["cy"] - p["b"], p["cy"] + p["b"])
            return (p["cx"] - p["a"], p["cx"] + p["a"]), (p["cy"] - p["b"], p["cy"] + p["b"])
        if self.kind == "axisym_dumbbell":
            zmax = p["bulb_center"] + p["bulb_radius"]
            return (0.0, p["bulb_radius"]), (-zmax, zmax)
        if self.kind == "lens":
            R, d = p["radius"], p["offset"]
            c = np.sqrt(R * R - d * d)
            top = 0.0 if p["flat_top"] else R - d
            return (-c, c), (d - R, top)
        s = p["side"] / 2
        return (p["cx"] - s, p["cx"] + s), (p["cy"] - s, p["cy"] + s)

    def default_grid(self, n: int, margin: float = 0.1) -> Grid:
        """Grid with ``n`` nodes across the first axis, equal spacing, ``margin`` collar."""
        (lo0, hi0), (lo1, hi1) = self.bounding_box()
        if self.n == 3:
            lo0 = 0.0
        else:
            lo0 -= margin
        hi0 += margin
        lo1 -= margin
        hi1 += margin
        h = (hi0 - lo0) / (n - 1)
        return Grid.with_spacing(self.grid_kind, (lo0, lo1), (hi0, hi1), h)

    # -- geometry ---------------------------------------------------------

    def level(self, x0, x1):
        """Implicit function: negative inside, positive outside.

        For ``n = 3`` the arguments are ``(r, z)`` and ``|r|`` is used.
        """
        p = self.params
        x0 = np.asarray(x0, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        if self.n == 3:
            x0 = np.abs(x0)
        if self.kind == "disk":
            return np.hypot(x0 - p["cx"], x1 - p["cy"]) - p["radius"]
        if self.kind == "ellipse":
            # scaled radial coordinate; sign-correct, not a distance
            s = np.hypot((x0 - p["cx"]) / p["a"], (x1 - p["cy"]) / p["b"])
            return (s - 1.0) * min(p["a"], p["b"])
        if self.kind == "axisym_dumbbell":
            return dumbbell_level(self, x0, x1)
        if self.kind == "lens":
            R, d = p["radius"], p["offset"]
            lower = np.hypot(x0, x1 - d) - R  # circle carrying the lower arc
            if p["flat_top"]:
                return np.maximum(lower, x1)
            upper = np.hypot(x0, x1 + d) - R
            return np.maximum(lower, upper)
        s = p["side"] / 2
        return np.maximum(np.abs(x0 - p["cx"]), np.abs(x1 - p["cy"])) - s

    def measure(self) -> float:
        """Area (``n = 2``) or volume (``n = 3``) of the domain."""
        p = self.params
        if self.kind == "disk":
            R = p["radius"]
            return np.pi * R * R if self.n == 2 else 4.0 / 3.0 * np.pi * R ** 3
        if self.kind == "ellipse":
            return np.pi * p["a"] * p["b"] if self.n == 2 else 4.0 / 3.0 * np.pi * p["a"] ** 2 * p["b"]
        if self.kind == "lens":
            R, d = p["radius"], p["offset"]
            seg = R * R * np.arccos(d / R) - d * np.sqrt(R * R - d * d)
            return seg if p["flat_top"] else 2 * seg
        if self.kind == "square":
            return p["side"] ** 2
        z = np.linspace(-p["bulb_center"] - p["bulb_radius"], p["bulb_center"] + p["bulb_radius"], 20001)
        r = np.nan_to_num(dumbbell_profile(self, z)[0])
        return float(np.trapezoid(np.pi * r * r, z))


# ---------------------------------------------------------------------------
# dumbbell profile


def _dumbbell_coeffs(spec: DomainSpec) -> tuple[float, np.ndarray]:
    """Join height and coefficients of the even neck polynomial.

    ``r(z) = r0 + k z**2 / 2 + c4 z**4 + c6 z**6 + c8 z**8`` on ``|z| <= z_j``
    matches value, slope and curvature of the bulb circle at ``z_j``.
    """
    p = spec.params
    R, c, r0, k = p["bulb_radius"], p["bulb_center"], p["neck_radius"], p["neck_curvature"]
    zj = c - R + p["blend_width"]
    rb = np.sqrt(R * R - (zj - c) ** 2)
    d1 = -(zj - c) / rb
    d2 = -R * R / rb ** 3
    A = np.array([[zj ** 4, zj ** 6, zj ** 8],
                  [4 * zj ** 3, 6 * zj ** 5, 8 * zj ** 7],
                  [12 * zj ** 2, 30 * zj ** 4, 56 * zj ** 6]])
    b = np.array([rb - r0 - 0.5 * k * zj ** 2, d1 - k * zj, d2 - k])
    c4, c6, c8 = np.linalg.solve(A, b)
    return zj, np.array([r0, 0.5 * k, c4, c6, c8])


def dumbbell_profile(spec: DomainSpec, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Profile radius and its first two ``z`` derivatives (``nan`` beyond the poles)."""
    p = spec.params
    R, c = p["bulb_radius"], p["bulb_center"]
    zj, co = _dumbbell_coeffs(spec)
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    sgn = np.where(z < 0, -1.0, 1.0)
    zz = az * az
    poly = co[0] + co[1] * zz + co[2] * zz ** 2 + co[3] * zz ** 3 + co[4] * zz ** 4
    dpoly = az * (2 * co[1] + 4 * co[2] * zz + 6 * co[3] * zz ** 2 + 8 * co[4] * zz ** 3)
    d2poly = 2 * co[1] + 12 * co[2] * zz + 30 * co[3] * zz ** 2 + 56 * co[4] * zz ** 3
    with np.errstate(invalid="ignore", divide="ignore"):
        arg = R * R - (az - c) ** 2
        rb = np.sqrt(np.where(arg >= 0, arg, np.nan))
        drb = -(az - c) / rb
        d2rb = -R * R / rb ** 3
    neck = az <= zj
    r = np.where(neck, poly, rb)
    dr = np.where(neck, dpoly, drb) * sgn
    d2r = np.where(neck, d2poly, d2rb)
    beyond = az > c + R
    r = np.where(beyond, np.nan, r)
    return r, dr, d2r


def dumbbell_level(spec: DomainSpec, r, z):
    p = spec.params
    zmax = p["bulb_center"] + p["bulb_radius"]
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    prof = dumbbell_profile(spec, np.clip(z, -zmax, zmax))[0]
    prof = np.where(np.isnan(prof), 0.0, prof)
    lvl = r - prof
    # beyond the poles: distance to the pole
    return np.where(np.abs(z) >= zmax, np.maximum(np.abs(z) - zmax, r) + 1e-300, lvl)


# ---------------------------------------------------------------------------
# convexity validation


@dataclass
class ConvexityReport:
    passed: bool
    min_curvature: float
    location: tuple[float, float]
    corner_angles: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "min_curvature": self.min_curvature,
                "location": list(self.location), "corner_angles": list(self.corner_angles)}


def boundary_samples(spec: DomainSpec, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Boundary points (``(k, 2)``) and scalar mean curvature toward the inside.

    Sampling is uniform in each piece's natural parameter.
    """
    p = spec.params
    t = (np.arange(samples) + 0.5) / samples
    if spec.kind == "disk":
        R = p["radius"]
        th = 2 * np.pi * t if spec.n == 2 else np.pi * (t - 0.5)
        if spec.n == 2:
            pts = np.column_stack([p["cx"] + R * np.cos(th), p["cy"] + R * np.sin(th)])
        else:
            pts = np.column_stack([R * np.cos(th), p["cy"] + R * np.sin(th)])
        return pts, np.full(samples, (spec.n - 1) / R)
    if spec.kind == "ellipse":
        a, b = p["a"], p["b"]
        th = 2 * np.pi * t if spec.n == 2 else np.pi * (t - 0.5)
        q = np.sqrt(a * a * np.sin(th) ** 2 + b * b * np.cos(th) ** 2)
        kappa = a * b / q ** 3
        if spec.n == 2:
            pts = np.column_stack([p["cx"] + a * np.cos(th), p["cy"] + b * np.sin(th)])
            return pts, kappa
        pts = np.column_stack([a * np.cos(th), p["cy"] + b * np.sin(th)])
        return pts, kappa + b / (a * q)
    if spec.kind == "axisym_dumbbell":
        return _dumbbell_samples(spec, samples)
    if spec.kind == "lens":
        pts, kap = [], []
        for piece in boundary_pieces(spec):
            pp, kk = piece.sample(t)
            pts.append(pp)
            kap.append(kk)
        return np.vstack(pts), np.concatenate(kap)
    pts, kap = [], []
    for piece in boundary_pieces(spec):
        pp, kk = piece.sample(t)
        pts.append(pp)
        kap.append(kk)
    return np.vstack(pts), np.concatenate(kap)


def _dumbbell_samples(spec: DomainSpec, samples: int):
    p = spec.params
    R, c = p["bulb_radius"], p["bulb_center"]
    zj, _ = _dumbbell_coeffs(spec)
    t = (np.arange(samples) + 0.5) / samples
    # neck: parameter z in [-zj, zj]
    z = -zj + 2 * zj * t
    r, dr, d2r = dumbbell_profile(spec, z)
    w = np.sqrt(1 + dr * dr)
    h_neck = -d2r / w ** 3 + 1.0 / (r * w)
    # bulbs: polar angle from the outer pole to the junction
    phi_j = np.arccos((zj - c) / R)
    phi = phi_j * t
    rb = R * np.sin(phi)
    zb = c + R * np.cos(phi)
    h_bulb = np.full(samples, 2.0 / R)
    pts = np.vstack([np.column_stack([r, z]),
                     np.column_stack([rb, zb]),
                     np.column_stack([rb, -zb])])
    return pts, np.concatenate([h_neck, h_bulb, h_bulb])


def validate_mean_convex(spec: DomainSpec, samples: int = 256) -> ConvexityReport:
    """Sample the boundary and report the minimum inward scalar mean curvature."""
    if samples < 64:
        raise ValueError("at least 64 samples are required")
    pts, kappa = boundary_samples(spec, samples)
    i = int(np.argmin(kappa))
    angles = corner_angles(spec) if spec.kind in ("lens", "square") else []
    ok = bool(kappa[i] > 0) and all(a <= np.pi for a in angles)
    return ConvexityReport(ok, float(kappa[i]), (float(pts[i, 0]), float(pts[i, 1])), angles)


# ---------------------------------------------------------------------------
# piecewise boundaries (planar kinds)


@dataclass(frozen=True)
class Piece:
    """Circular arc (``radius`` finite) or straight segment of a planar boundary.

    Arcs run counter-clockwise from ``theta0`` to ``theta1`` about ``center``;
    ``convex`` tells whether the domain lies on the centre side.
    """

    label: str
    start: tuple[float, float]
    end: tuple[float, float]
    center: tuple[float, float] | None = None
    radius: float = np.inf
    theta0: float = 0.0
    theta1: float = 0.0

    @property
    def length(self) -> float:
        if np.isinf(self.radius):
            return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))
        return float(self.radius * abs(self.theta1 - self.theta0))

    def point(self, s) -> np.ndarray:
        """Point at arclength ``s`` measured from ``start``."""
        s = np.asarray(s, dtype=float)
        if np.isinf(self.radius):
            a = np.asarray(self.start)
            b = np.asarray(self.end)
            f = (s / self.length)[..., None]
            return a + f * (b - a)
        sign = 1.0 if self.theta1 >= self.theta0 else -1.0
        th = self.theta0 + sign * s / self.radius
        return np.stack([self.center[0] + self.radius * np.cos(th),
                         self.center[1] + self.radius * np.sin(th)], axis=-1)

    def tangent(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if np.isinf(self.radius):
            d = np.asarray(self.end) - np.asarray(self.start)
            return np.broadcast_to(d / np.linalg.norm(d), s.shape + (2,)).copy()
        sign = 1.0 if self.theta1 >= self.theta0 else -1.0
        th = self.theta0 + sign * s / self.radius
        return sign * np.stack([-np.sin(th), np.cos(th)], axis=-1)

    @property
    def curvature(self) -> float:
        return 0.0 if np.isinf(self.radius) else 1.0 / self.radius

    def sample(self, t) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(t) * self.length
        return self.point(s), np.full(np.shape(t), self.curvature)

    def project(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Arclength of the closest point and distance, for ``(k, 2)`` points."""
        pts = np.asarray(pts, dtype=float)
        if np.isinf(self.radius):
            a = np.asarray(self.start)
            d = np.asarray(self.end) - a
            L = np.linalg.norm(d)
            s = np.clip((pts - a) @ d / L, 0.0, L)
        else:
            th = np.arctan2(pts[:, 1] - self.center[1], pts[:, 0] - self.center[0])
            lo, hi = sorted((self.theta0, self.theta1))
            th = np.where(th < lo - np.pi, th + 2 * np.pi, th)
            th = np.where(th > hi + np.pi, th - 2 * np.pi, th)
            th = np.clip(th, lo, hi)
            s = np.abs(th - self.theta0) * self.radius
        dist = np.linalg.norm(self.point(s) - pts, axis=-1)
        return s, dist


def boundary_pieces(spec: DomainSpec) -> list[Piece]:
    """Boundary pieces labelled ``sigma`` (initial curve) / ``sigma_prime``.

    Every ``sigma_prime`` piece starts at the left corner of ``sigma`` so
    arclengths along it are measured from that corner.
    """
    p = spec.params
    if spec.kind == "lens":
        R, d = p["radius"], p["offset"]
        c = float(np.sqrt(R * R - d * d))
        # upper arc: circle centred (0, -d); lower arc: circle centred (0, d)
        a_up = float(np.arctan2(d, c))
        if p["flat_top"]:
            sigma = Piece("sigma", (-c, 0.0), (c, 0.0))
        else:
            sigma = Piece("sigma", (-c, 0.0), (c, 0.0), (0.0, -d), R, np.pi - a_up, a_up)
        a_lo = float(np.arctan2(-d, c))
        lower = Piece("sigma_prime", (-c, 0.0), (c, 0.0), (0.0, d), R, np.pi - a_lo, 2 * np.pi + a_lo)
        return [sigma, lower]
    if spec.kind == "square":
        s = p["side"] / 2
        x0, y0 = p["cx"], p["cy"]
        tl, tr = (x0 - s, y0 + s), (x0 + s, y0 + s)
        bl, br = (x0 - s, y0 - s), (x0 + s, y0 - s)
        return [Piece("sigma", tl, tr), Piece("sigma_prime", tl, bl),
                Piece("sigma_prime", bl, br), Piece("sigma_prime", br, tr)]
    raise SpecificationError(f"{spec.kind} has no piecewise description")


def corner_angles(spec: DomainSpec) -> list[float]:
    """Interior angle at every junction between consecutive boundary pieces."""
    pieces = boundary_pieces(spec)
    ends = []
    for pc in pieces:
        ends.append((np.asarray(pc.start), pc.tangent(0.0)))
        ends.append((np.asarray(pc.end), -pc.tangent(pc.length)))
    angles = []
    used = [False] * len(ends)
    for i in range(len(ends)):
        if used[i]:
            continue
        for j in range(i + 1, len(ends)):
            if used[j] or j // 2 == i // 2:
                continue
            if np.linalg.norm(ends[i][0] - ends[j][0]) < 1e-9:
                used[i] = used[j] = True
                t1, t2 = ends[i][1], ends[j][1]
                ang = float(np.arccos(np.clip(t1 @ t2, -1.0, 1.0)))
                # interior side: bisector must point inside
                mid = ends[i][0] + 1e-6 * (t1 + t2) / max(np.linalg.norm(t1 + t2), 1e-12)
                if spec.level(mid[0], mid[1]) > 0:
                    ang = 2 * np.pi - ang
                angles.append(ang)
                break
    return angles


# ---------------------------------------------------------------------------
# grid masks

_SUB = np.array([-0.5, 0.0, 0.5])


def build_mask(spec: DomainSpec, grid: Grid) -> ScalarField:
    """Classify nodes and return a zero-valued field carrying the mask.

    Nodes strictly inside the domain are *interior*.  Remaining nodes whose
    cell (``[x - h/2, x + h/2]`` per axis) straddles the zero level, or that
    neighbour an interior node, are *boundary* (the Dirichlet collar); the
    rest are *outside*.
    """
    if grid.kind != spec.grid_kind:
        raise SpecificationError(f"{spec.kind} (n={spec.n}) needs a {spec.grid_kind} grid")
    (lo0, hi0), (lo1, hi1) = spec.bounding_box()
    g0, g1 = grid.axis_coords(0), grid.axis_coords(1)
    h0, h1 = grid.spacing
    covers = (g1[0] <= lo1 - h1 and g1[-1] >= hi1 + h1 and g0[-1] >= hi0 + h0
              and (grid.has_axis or g0[0] <= lo0 - h0))
    X0, X1 = grid.coords()
    inside = spec.level(X0, X1) < 0
    neg = np.zeros(grid.shape, dtype=bool)
    pos = np.zeros(grid.shape, dtype=bool)
    for a in _SUB:
        for b in _SUB:
            lv = spec.level(X0 + a * h0, X1 + b * h1)
            neg |= lv < 0
            pos |= lv >= 0
    collar = ndimage.binary_dilation(inside, structure=np.ones((3, 3)))
    mask = np.full(grid.shape, OUTSIDE, dtype=np.int8)
    mask[~inside & ((neg & pos) | collar)] = BOUNDARY
    mask[inside] = INTERIOR
    # the outermost ring of the array can never hold an interior stencil
    edge = np.zeros(grid.shape, dtype=bool)
    edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    if not grid.has_axis:
        edge[0, :] = True
    mask[edge & (mask == INTERIOR)] = BOUNDARY
    interior = mask == INTERIOR
    if not interior.any():
        raise ResolutionError("no interior nodes: grid does not resolve the domain")
    if not covers:
        raise ResolutionError("grid does not cover the domain with a one-node margin")
    labels, count = ndimage.label(interior)
    eroded = ndimage.binary_erosion(interior, structure=np.ones((3, 3)))
    if grid.has_axis:
        # the reflected axis column counts as thick
        eroded[0] |= interior[0] & interior[1] & np.roll(interior[0], 1) & np.roll(interior[0], -1)
    for lab in range(1, count + 1):
        if not eroded[labels == lab].any():
            raise ResolutionError("an interior region is thinner than 3 nodes")
    return ScalarField(grid, np.zeros(grid.shape), mask)


def mask_measure(field: ScalarField) -> float:
    """Interior node count times cell measure."""
    return float(field.grid.cell_measure()[field.interior].sum())
