"""Closed-form principal curvatures shared by the graph and level-set diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CurvatureDiagnostics:
    """Principal curvatures at one point, sorted ascending, with ``h = sum``."""

    kappas: tuple[float, ...]
    h: float
    ratio: float
    grad_norm: float
    regular: bool

    @property
    def kappa1(self) -> float:
        return self.kappas[0]

    @property
    def kappa_last(self) -> float:
        return self.kappas[-1]

    @classmethod
    def from_kappas(cls, kappas, grad_norm: float, regular: bool) -> "CurvatureDiagnostics":
        ks = tuple(sorted(float(k) for k in kappas))
        h = float(sum(ks))
        ratio = ks[0] / h if h != 0 else float("nan")
        return cls(ks, h, float(ratio), float(grad_norm), bool(regular and h > 0))


def sym2_eigvals(a, b, c):
    """Eigenvalues ``(lo, hi)`` of ``[[a, b], [b, c]]``, elementwise."""
    mean = 0.5 * (a + c)
    rad = np.sqrt((0.5 * (a - c)) ** 2 + b * b)
    return mean - rad, mean + rad


def generalized_eigvals2(g00, g01, g11, s00, s01, s11):
    """Roots of ``det(S - k G) = 0`` for symmetric 2x2 ``S`` and SPD ``G``."""
    det_g = g00 * g11 - g01 * g01
    trace = (g11 * s00 + g00 * s11 - 2.0 * g01 * s01) / det_g
    det_s = (s00 * s11 - s01 * s01) / det_g
    mean = 0.5 * trace
    disc = np.maximum(mean * mean - det_s, 0.0)
    rad = np.sqrt(disc)
    return mean - rad, mean + rad
