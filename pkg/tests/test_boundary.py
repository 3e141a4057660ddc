import math

import numpy as np
import pytest
from scipy.interpolate import RegularGridInterpolator

from mcflab.boundary import (BoundaryMotionSpec, DegenerateOutputError, HypothesisError, limit_surface,
                             smoothstep, solve_boundary_flow, staircase, staircase_trace, validate_hypotheses)
from mcflab.domain import DomainSpec, SpecificationError, build_mask
from mcflab.mesh import INTERIOR, ScalarField
from mcflab.oracles import arc_points, curve_shortening
from mcflab.regularize import ParameterError

LENS = DomainSpec("lens", 2)
CORNER = 0.6


def moving_spec(horizon=1.0, power=2.0, amplitude=0.3, rate=0.1):
    t = np.linspace(0.0, 1.5, 151)
    s = amplitude * (1 - np.exp(-t / rate))
    s[-1] = amplitude
    return BoundaryMotionSpec(LENS, np.column_stack([t, s, s]), horizon_scale=horizon, horizon_power=power)


def linear_spec(slope=0.5, t_end=0.4):
    t = np.array([0.0, t_end, t_end + 1.0])
    s = np.array([0.0, t_end / slope, t_end / slope])
    return BoundaryMotionSpec(LENS, np.column_stack([t, s, s]))


class TestSpec:
    def test_needs_piecewise_domain(self):
        with pytest.raises(SpecificationError):
            BoundaryMotionSpec(DomainSpec("disk", 2))

    def test_sample_shape(self):
        with pytest.raises(SpecificationError):
            BoundaryMotionSpec(LENS, np.zeros((3, 2)))

    def test_barrier_length_and_corners(self):
        spec = BoundaryMotionSpec(LENS)
        assert spec.barrier_length == pytest.approx(2 * math.atan2(0.6, 0.8))
        np.testing.assert_allclose(spec.corners[0], (-CORNER, 0.0), atol=1e-12)
        np.testing.assert_allclose(spec.barrier_point([0.0, spec.barrier_length]),
                                   [[-CORNER, 0.0], [CORNER, 0.0]], atol=1e-12)

    def test_static_boundary_is_never_swept(self):
        spec = BoundaryMotionSpec(LENS)
        assert np.isinf(spec.passage_time(np.array([0.1, 0.5]))).all()


class TestHypotheses:
    def test_static_lens_passes(self):
        rep = validate_hypotheses(BoundaryMotionSpec(LENS))
        assert rep.passed, rep.to_dict()
        assert "not minimal" in rep.results["5_minimal_start"][1]

    def test_moving_lens_passes(self):
        assert validate_hypotheses(moving_spec()).passed

    def test_square_fails_mean_convexity(self):
        rep = validate_hypotheses(BoundaryMotionSpec(DomainSpec("square", 2)))
        assert "2_mean_convex" in rep.failed()

    def test_decreasing_parameter_fails_monotonicity(self):
        samples = np.array([[0.0, 0.0, 0.0], [0.1, 0.2, 0.1], [0.2, 0.1, 0.1]])
        rep = validate_hypotheses(BoundaryMotionSpec(LENS, samples))
        assert "4_monotone" in rep.failed()

    def test_crossing_fronts_fail(self):
        spec = BoundaryMotionSpec(LENS)
        L = spec.barrier_length
        samples = np.array([[0.0, 0.0, 0.0], [1.0, 0.7 * L, 0.7 * L], [2.0, 0.7 * L, 0.7 * L]])
        assert "4_monotone" in validate_hypotheses(BoundaryMotionSpec(LENS, samples)).failed()

    def test_static_flat_top_fails_minimal_start(self):
        rep = validate_hypotheses(BoundaryMotionSpec(DomainSpec("lens", 2, {"flat_top": 1.0})))
        assert "5_minimal_start" in rep.failed()

    def test_unsettled_motion_fails_convergence(self):
        samples = np.array([[0.0, 0.0, 0.0], [0.1, 0.1, 0.1], [0.2, 0.2, 0.2]])
        assert "6_convergence" in validate_hypotheses(BoundaryMotionSpec(LENS, samples)).failed()

    def test_return_to_start_is_rejected(self):
        samples = np.array([[0.0, 0.0, 0.0], [0.1, 0.1, 0.1], [0.2, 0.0, 0.0], [1.0, 0.0, 0.0]])
        rep = validate_hypotheses(BoundaryMotionSpec(LENS, samples))
        assert "4_monotone" in rep.failed()


class TestStaircase:
    def test_smoothstep_ends(self):
        np.testing.assert_array_equal(smoothstep([-1.0, 0.0, 1.0, 2.0]), [0.0, 0.0, 1.0, 1.0])
        assert smoothstep(0.5) == 0.5

    def test_static_lambda_four(self):
        spec = BoundaryMotionSpec(LENS)
        data = staircase(spec, 4.0, horizon=1.0)
        assert data.collar == 0.25
        L = spec.barrier_length
        for row in data.rows():
            if row["piece"] == "sigma":
                assert row["value"] == 0.0
            elif 0.25 <= row["s"] <= L - 0.25:
                assert row["value"] == pytest.approx(4.0)
            else:
                assert 0.0 <= row["value"] <= 4.0
        certs = {(r["s"], r["certificate"]) for r in data.rows() if r["piece"] == "sigma_prime"}
        assert (0.0, "segment") in certs and (L, "segment") in certs

    def test_grid_corner_nodes_carry_segment_certificates(self):
        spec = BoundaryMotionSpec(LENS)
        g = LENS.default_grid(96)
        data = staircase(spec, 4.0, g, horizon=1.0)
        segments = [n for n, c in data.certificate.items() if c == "segment"]
        assert len(segments) == 2
        xs = sorted(g.node_position(n)[0] for n in segments)
        assert xs[0] == pytest.approx(-CORNER, abs=2 * g.h)
        assert xs[1] == pytest.approx(CORNER, abs=2 * g.h)

    def test_linear_motion_slope(self):
        slope = 0.5
        spec = linear_spec(slope)
        lam = 4.0
        s = np.linspace(0.3, 0.6, 7)  # swept, outside the corner collar
        pts = spec.barrier_point(s)
        vals = staircase_trace(spec, lam, pts[:, 0], pts[:, 1])
        np.testing.assert_allclose(np.diff(vals) / np.diff(s), lam * slope, rtol=1e-9)

    def test_collar_halves_when_lambda_doubles(self):
        spec = BoundaryMotionSpec(LENS)
        assert staircase(spec, 8.0).collar == 2 * staircase(spec, 16.0).collar

    def test_trace_monotone_along_swept_barrier(self):
        spec = moving_spec()
        data = staircase(spec, 16.0)
        L = spec.barrier_length
        rows = [r for r in data.rows() if r["piece"] == "sigma_prime" and r["s"] <= L / 2]
        vals = [r["value"] for r in rows]
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_nonpositive_lambda(self):
        with pytest.raises(ParameterError):
            staircase(BoundaryMotionSpec(LENS), 0.0)


class TestStaticLens:
    def test_reached_region_is_above_the_chord(self, lens_flow):
        res = lens_flow.value
        X0, X1 = res.u.grid.coords()
        inside = res.u.mask == INTERIOR
        reached = inside & ~res.not_reached
        assert reached[inside & (X1 >= 0.05)].all()
        assert not reached[inside & (X1 <= -0.05)].any()

    def test_limit_curve_is_the_chord(self, lens_flow):
        res = lens_flow.value
        curve = limit_surface(BoundaryMotionSpec(LENS), res.u, res.horizon)
        assert curve.hausdorff_to_segment((-CORNER, 0.0), (CORNER, 0.0)) <= 0.02

    def test_ladder_differences_decrease(self, lens_flow):
        d = lens_flow.value.ladder.differences
        assert all(b < a for a, b in zip(d, d[1:]))

    def test_straightness_improves_with_refinement(self, lens_flow):
        spec = BoundaryMotionSpec(LENS)
        coarse = solve_boundary_flow(spec, LENS.default_grid(128), [8.0, 16.0, 32.0, 64.0])
        s_coarse = limit_surface(spec, coarse.u, coarse.horizon).straightness
        s_fine = limit_surface(spec, lens_flow.value.u, lens_flow.value.horizon).straightness
        assert s_fine <= s_coarse

    def test_failed_validation_raises(self):
        spec = BoundaryMotionSpec(DomainSpec("square", 2))
        with pytest.raises(HypothesisError):
            solve_boundary_flow(spec, spec.domain.default_grid(64), [4.0])


@pytest.fixture(scope="module")
def flat():
    spec = BoundaryMotionSpec(DomainSpec("lens", 2, {"flat_top": 1.0}))
    grid = spec.domain.default_grid(128)
    return spec, solve_boundary_flow(spec, grid, [4.0, 8.0, 16.0, 32.0, 64.0], validate=False)


class TestFlatLens:
    def test_only_the_initial_curve_is_reached(self, flat):
        _, res = flat
        g = res.u.grid
        X1 = g.coords()[1]
        reached = (res.u.mask == INTERIOR) & ~res.not_reached
        # the first interior row sits within one spacing of the flat top
        assert (np.abs(X1[reached]) < g.h).all()

    def test_limit_is_the_initial_curve(self, flat):
        spec, res = flat
        curve = limit_surface(spec, res.u, res.horizon)
        assert curve.hausdorff_to_segment((-CORNER, 0.0), (CORNER, 0.0)) <= 0.02


class TestMovingLens:
    GRID = LENS.default_grid(192)

    @pytest.mark.parametrize("T", [0.1, 0.2, 0.4])
    def test_arrival_matches_curve_shortening(self, T):
        spec = moving_spec(horizon=T, power=0.0)
        res = solve_boundary_flow(spec, self.GRID, [16.0, 32.0, 64.0])
        L = spec.barrier_length

        def ends(t):
            s_left, s_right = spec.front(t)
            return tuple(spec.barrier_point([s_left, L - s_right]))

        a = math.atan2(0.8, 0.6)
        flow = curve_shortening(arc_points((0.0, -0.8), 1.0, math.pi - a, a), T / 2, snapshots=3, endpoints=ends)
        g = self.GRID
        interp = RegularGridInterpolator((g.axis_coords(0), g.axis_coords(1)), res.u.values)
        for t, curve in zip(flow.times[1:], flow.curves[1:]):
            assert np.abs(interp(curve[5:-5]) - t).max() <= 2e-3

    def test_swept_region_grows_with_horizon(self):
        areas = []
        for T in (0.1, 0.2, 0.4):
            res = solve_boundary_flow(moving_spec(horizon=T, power=0.0), self.GRID, [16.0, 32.0, 64.0])
            reached = (res.u.mask == INTERIOR) & ~res.not_reached
            areas.append(reached.sum())
        assert areas[0] < areas[1] < areas[2]


class TestLimitSurface:
    def test_nothing_reached(self):
        spec = BoundaryMotionSpec(LENS)
        g = LENS.default_grid(64)
        mask = build_mask(LENS, g)
        u = ScalarField(g, np.full(g.shape, 10.0), mask.mask)
        with pytest.raises(DegenerateOutputError):
            limit_surface(spec, u, horizon=1.0)

    def test_polyline_closed_by_limit_points(self, lens_flow):
        res = lens_flow.value
        curve = limit_surface(BoundaryMotionSpec(LENS), res.u, res.horizon)
        np.testing.assert_allclose(curve.points[0], (-CORNER, 0.0), atol=1e-12)
        np.testing.assert_allclose(curve.points[-1], (CORNER, 0.0), atol=1e-12)
