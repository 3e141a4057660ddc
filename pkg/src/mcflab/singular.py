"""Singular points of the limit flow and their tangent-flow type.

Candidates are nodes where the arrival time stops being regular (tiny
gradient or non-positive mean curvature) at the two largest ladder members.
Each connected cluster becomes one candidate.  Its type is read off the
principal-curvature ratios ``kappa_1 / h`` and ``kappa_last / h`` on shells
at dyadic distances around the cluster: a shrinking sphere gives
``(1/2, 1/2)`` and a shrinking cylinder ``(0, 1)`` in three dimensions.
Only nodes reached no later than the candidate are probed, because the
tangent flow describes the surfaces that run into the singularity.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .arrival import level_set_curvature_fields, regularity_threshold
from .mesh import ScalarField, gradient_field, stencil_ok
from .regularize import LadderResult

SHELLS = (2, 4, 8, 16)
RATIO_TOL = 0.05
STAR_FLOOR = -0.05


class InputError(ValueError):
    pass


@dataclass
class Candidate:
    position: tuple[float, ...]
    nodes: np.ndarray
    blowup_trace: list[float]
    classification: str = "unclassified"
    shell_distances: list[float] = field(default_factory=list)
    ratio_first: list[float] = field(default_factory=list)
    ratio_last: list[float] = field(default_factory=list)
    limit: tuple[float, float] | None = None
    neighborhood_min_ratio: float | None = None
    core_radius: float | None = None
    note: str = ""

    @property
    def blowup_increasing(self) -> bool:
        t = self.blowup_trace
        return all(b > a for a, b in zip(t, t[1:]))

    def to_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "node_count": int(len(self.nodes)),
            "blowup_trace": [float(x) for x in self.blowup_trace],
            "blowup_increasing": self.blowup_increasing,
            "classification": self.classification,
            "core_radius": self.core_radius,
            "shell_offsets": self.shell_distances,
            "ratio_kappa1_over_h": self.ratio_first,
            "ratio_kappa_last_over_h": self.ratio_last,
            "extrapolated_limit": None if self.limit is None else list(self.limit),
            "neighborhood_min_ratio": self.neighborhood_min_ratio,
            "note": self.note,
        }


@dataclass
class SingularityReport:
    lambdas: list[float]
    eps_reg: float
    candidates: list[Candidate]
    tolerance: float = RATIO_TOL
    star_floor: float = STAR_FLOOR
    nonregular_measure: float = 0.0

    @property
    def classifications(self) -> list[str]:
        return [c.classification for c in self.candidates]

    def to_dict(self) -> dict:
        return {
            "lambdas": self.lambdas,
            "eps_reg": self.eps_reg,
            "ratio_tolerance": self.tolerance,
            "star_floor": self.star_floor,
            "shell_multiples": list(SHELLS),
            "nonregular_measure": self.nonregular_measure,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def _fields_from(ladder: LadderResult | None, u_fields: Sequence[ScalarField] | None) -> list[ScalarField]:
    if u_fields is None:
        if ladder is None:
            raise InputError("need a ladder or a list of arrival fields")
        u_fields = ladder.u_fields()
    u_fields = list(u_fields)
    grid = u_fields[0].grid
    for u in u_fields[1:]:
        if u.grid != grid or not np.array_equal(u.mask, u_fields[0].mask):
            raise InputError("arrival fields live on different grids")
    return u_fields


def detect_singular(ladder: LadderResult | None = None, u_fields: Sequence[ScalarField] | None = None,
                    lambdas: Sequence[float] | None = None, eps_reg: float | None = None) -> SingularityReport:
    """Cluster nodes that are non-regular at the two largest ladder members.

    The blow-up trace of a candidate is, for each member, the largest mean
    curvature ``lambda / W`` of the translating graph within ``4 dx`` of the
    cluster; near a critical point of ``u`` it grows like ``lambda``.
    """
    fields = _fields_from(ladder, u_fields)
    if lambdas is None:
        if ladder is None:
            raise InputError("lambda values are required with bare fields")
        lambdas = ladder.schedule
    lambdas = [float(x) for x in lambdas]
    if len(fields) != len(lambdas):
        raise InputError("one lambda per arrival field")
    if len(fields) < 3:
        raise InputError("singular detection needs at least three ladder members")
    grid = fields[0].grid
    if eps_reg is None:
        eps_reg = regularity_threshold(grid)
    ok = stencil_ok(fields[0].mask, grid, strict=True)
    flags = ok.copy()
    for u in fields[-2:]:
        diag = level_set_curvature_fields(u, eps_reg)
        flags &= ~diag["regular"]
    labels, count = ndimage.label(flags, structure=np.ones((3, 3)))
    X = grid.coords()
    measure = float(grid.cell_measure()[flags].sum())
    spacing = grid.spacing
    candidates = []
    for k in range(1, count + 1):
        nodes = np.argwhere(labels == k)
        member = labels == k
        pos = [float(x[member].mean()) for x in X]
        if grid.has_axis and member[0].any():
            pos[0] = 0.0  # a cluster meeting the axis is centred on it
        pos = tuple(pos)
        dist = ndimage.distance_transform_edt(~member, sampling=spacing)
        near = (dist <= 4 * grid.h) & ok
        trace = []
        for u, lam in zip(fields, lambdas):
            p = gradient_field(lam * u.values, grid)
            W = np.sqrt(1.0 + (p ** 2).sum(axis=0))
            trace.append(float((lam / W)[near].max()))
        candidates.append(Candidate(pos, nodes, trace))
    candidates.sort(key=lambda c: c.position[::-1])
    return SingularityReport(lambdas, float(eps_reg), candidates, nonregular_measure=measure)


def _limit_target(n_curv: int) -> dict[str, tuple[float, ...]]:
    if n_curv == 1:
        return {"sphere": (1.0,)}
    return {"sphere": (0.5, 0.5), "cylinder": (0.0, 1.0)}


def classify_tangent(report: SingularityReport, u: ScalarField, tolerance: float = RATIO_TOL,
                     shells: Sequence[int] = SHELLS) -> SingularityReport:
    """Assign sphere / cylinder / unknown to every candidate.

    The candidate point is the cluster centroid.  Its non-regular core has
    radius ``r_core``, the distance to the nearest regular node reached no
    later than the candidate.  Shells sit at ``r_core + m dx``; on each the
    median ratios are formed and a straight-line fit in ``m dx`` is
    extrapolated to the edge of the core.
    """
    grid = u.grid
    diag = level_set_curvature_fields(u, report.eps_reg)
    n_curv = diag["kappa"].shape[0]
    targets = _limit_target(n_curv)
    dx = grid.h
    X = grid.coords()
    for cand in report.candidates:
        p = cand.position
        dist = np.sqrt(sum((x - c) ** 2 for x, c in zip(X, p)))
        u_star = float(u.values[grid.nearest_node(p)])
        past = diag["regular"] & (u.values <= u_star)
        ds, r1, r2 = [], [], []
        r_core = float(dist[past].min()) if past.any() else 0.0
        cand.core_radius = r_core
        for m in shells:
            d = m * dx
            shell = past & (np.abs(dist - r_core - d) <= 0.5 * dx)
            if not shell.any():
                continue
            ds.append(d)
            r1.append(float(np.median(diag["ratio"][shell])))
            r2.append(float(np.median(diag["ratio_last"][shell])))
        cand.shell_distances, cand.ratio_first, cand.ratio_last = ds, r1, r2
        hood = past & (dist <= r_core + max(shells) * dx + 0.5 * dx)
        cand.neighborhood_min_ratio = float(diag["ratio"][hood].min()) if hood.any() else None
        if not ds:
            cand.classification = "unknown"
            cand.note = "no regular probe nodes on any shell"
            continue
        lim = (_extrapolate(ds, r1), _extrapolate(ds, r2))
        cand.limit = lim
        vec = lim[:1] if n_curv == 1 else lim
        cand.classification = "unknown"
        for name, target in targets.items():
            if all(abs(a - b) <= tolerance for a, b in zip(vec, target)):
                cand.classification = name
        if cand.classification == "unknown":
            cand.note = f"extrapolated ratios {tuple(round(x, 3) for x in vec)} match no signature"
    report.tolerance = tolerance
    return report


def _extrapolate(ds: Sequence[float], values: Sequence[float]) -> float:
    if len(ds) == 1:
        return float(values[0])
    slope, intercept = np.polyfit(np.asarray(ds), np.asarray(values), 1)
    return float(intercept)
