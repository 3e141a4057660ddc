import math

import numpy as np
import pytest
from scipy import integrate

from mcflab.domain import DomainSpec, build_mask
from mcflab.mesh import Grid, ScalarField
from mcflab.translator import (GraphSurface, ParameterError, ScaledValue, bowl, grim_reaper, hzero_check,
                               profile_rows, soliton_study, stationarity_check, translator_residual,
                               weighted_area)


def line(n, half=1.2):
    return Grid.from_extents("line", (-half,), (half,), (n,))


def cell_centred_line(n, half=1.0):
    h = 2 * half / n
    return Grid("line", (n,), (h,), (-half + h / 2,))


def flat_disk(n=96, height=0.0):
    d = DomainSpec("disk", 2)
    g = d.default_grid(n)
    m = build_mask(d, g)
    return GraphSurface(ScalarField(g, np.full(g.shape, height), m.mask))


class TestGrimReaper:
    def test_closed_form_values(self):
        gr = grim_reaper(1.0)
        assert gr.height(math.pi / 4) == pytest.approx(math.log(math.sqrt(2)), abs=1e-12)
        assert gr.height(0.0) == 0.0
        assert gr.slope(0.0) == 0.0

    def test_parabolic_rescaling(self):
        x = np.linspace(-0.7, 0.7, 11)
        np.testing.assert_allclose(grim_reaper(2.0).height(x), 0.5 * grim_reaper(1.0).height(2 * x), atol=1e-14)

    def test_nonpositive_speed(self):
        with pytest.raises(ParameterError):
            grim_reaper(0.0)

    def test_residual_on_fine_grid(self):
        s = grim_reaper(1.0).surface(line(1024))
        assert np.abs(translator_residual(s, (0, 1)).values).max() <= 5e-4

    def test_residual_second_order(self):
        res = [np.abs(translator_residual(grim_reaper(1.0).surface(line(n)), (0, 1)).values).max()
               for n in (257, 513, 1025)]
        orders = [math.log2(a / b) for a, b in zip(res, res[1:])]
        assert min(orders) >= 1.8

    def test_weighted_area_matches_quadrature(self):
        s = grim_reaper(1.0).surface(cell_centred_line(8000))
        ref, _ = integrate.quad(lambda x: math.exp(-math.log(math.cos(x))) * math.sqrt(1 + math.tan(x) ** 2),
                                -1.0, 1.0, epsabs=1e-12, epsrel=1e-12)
        assert float(weighted_area(s, (0, 1))) == pytest.approx(ref, rel=1e-6)

    def test_stationary(self):
        s = grim_reaper(1.0).surface(cell_centred_line(2000))
        E = float(weighted_area(s, (0, 1)))
        assert stationarity_check(s, (0, 1), trials=8) <= 1e-6 * E

    def test_hzero(self):
        assert hzero_check(grim_reaper(1.0).surface(line(513)), (0, 1))["passed"]


class TestBowl:
    def test_axis_regular(self):
        b = bowl(1.0, 10.0)
        assert b.height(0.0) == 0.0 and b.slope(0.0) == 0.0

    def test_convex_and_increasing_slope(self):
        _, phi, dphi = bowl(1.0, 10.0).profile
        assert (np.diff(dphi) > 0).all()
        assert (phi >= 0).all()

    def test_asymptotic_envelope(self):
        b = bowl(1.0, 10.0)
        r = np.linspace(5, 10, 51)
        assert np.abs(b.height(r) - (r ** 2 / 2 - np.log(r))).max() <= 1.0

    def test_residual_on_radius_four(self):
        g = Grid("radial", (2001,), (4 / 2000,), (0.0,))
        s = bowl(1.0).surface(g)
        assert np.abs(translator_residual(s, (0, 0, 1)).values).max() <= 1e-5

    def test_stationary_and_hzero(self):
        g = Grid("radial", (2001,), (4 / 2000,), (0.0,))
        s = bowl(1.0).surface(g)
        E = float(weighted_area(s, (0, 0, 1)))
        assert stationarity_check(s, (0, 0, 1), trials=8) <= 1e-5 * E
        assert hzero_check(s, (0, 0, 1))["passed"]

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            bowl(-1.0)


class TestFlatGraphs:
    def test_vertical_velocity_gives_minus_one(self):
        s = flat_disk()
        r = translator_residual(s, (0, 0, 1))
        assert np.unique(r.values[s.base.interior]).tolist() == [-1.0]

    def test_horizontal_velocity_gives_zero(self):
        s = flat_disk()
        r = translator_residual(s, (1, 0, 0))
        assert np.abs(r.values).max() == 0.0

    def test_not_stationary(self):
        s = flat_disk()
        assert stationarity_check(s, (0, 0, 1), trials=8) > 1e-2 * float(weighted_area(s, (0, 0, 1)))

    def test_disk_weighted_area(self):
        s = flat_disk(256)
        assert float(weighted_area(s, (0, 0, 1))) == pytest.approx(math.pi, rel=1e-2)

    def test_raised_disk_weighted_area(self):
        s = flat_disk(256, height=1.0)
        assert float(weighted_area(s, (0, 0, 1))) == pytest.approx(math.e * math.pi, rel=1e-2)

    def test_horizontal_shift_invariance(self):
        s = flat_disk(128)
        g = s.grid
        moved = Grid(g.kind, g.shape, g.spacing, (g.origin[0] + 0.37, g.origin[1] - 0.2))
        shifted = GraphSurface(ScalarField(moved, s.base.values, s.base.mask))
        assert float(weighted_area(shifted, (0, 0, 1))) == pytest.approx(float(weighted_area(s, (0, 0, 1))),
                                                                          rel=1e-12)

    def test_overflow_is_scaled(self):
        s = flat_disk(64, height=1000.0)
        e = weighted_area(s, (0, 0, 1))
        assert isinstance(e, ScaledValue)
        assert e.log() == pytest.approx(1000.0 + math.log(float(weighted_area(flat_disk(64), (0, 0, 1)))),
                                        rel=1e-12)


def test_soliton_study_orders():
    for spec in (grim_reaper(1.0), bowl(1.0)):
        out = soliton_study(spec)
        assert max(out["residuals"]) <= 1e-4
        assert min(out["orders"]) >= 1.8
        assert out["stationarity"] <= 1e-5


def test_profile_rows_start_on_axis():
    rows = profile_rows(bowl(1.0), samples=11)
    assert rows[0] == (0.0, 0.0, 0.0)
    assert len(rows) == 11
