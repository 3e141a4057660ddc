import math

import numpy as np
import pytest

from mcflab.arrival import (PreconditionError, arrival_residual, curvature_table, epsilon_grid,
                            level_set_curvature_fields, level_set_curvatures, product_lift, product_lift_check,
                            ratio_bound_check, regularity_threshold, relative_boundary)
from mcflab.curvature import CurvatureDiagnostics
from mcflab.domain import DomainSpec, build_mask
from mcflab.mesh import Grid, ScalarField, StencilError
from mcflab.regularize import u_lambda


def sphere_field(n=129):
    """Arrival time of the shrinking unit sphere on a meridian grid."""
    d = DomainSpec("disk", 3)
    g = d.default_grid(n)
    r, z = g.coords()
    return ScalarField(g, (1 - r * r - z * z) / 4, build_mask(d, g).mask)


def circle_field(n=257):
    d = DomainSpec("disk", 2)
    g = d.default_grid(n)
    x, y = g.coords()
    return ScalarField(g, (1 - x * x - y * y) / 2, build_mask(d, g).mask)


def cylinder_field(n=129):
    g = Grid.with_spacing("axisym_rz", (0.0, -1.0), (1.1, 1.0), 1.1 / (n - 1))
    r, _ = g.coords()
    return ScalarField(g, (1 - r * r) / 2)


def radius(field):
    a, b = field.grid.coords()
    return np.hypot(a, b)


def shell(field, lo=0.1, hi=0.9):
    rho = radius(field)
    fields = level_set_curvature_fields(field)
    return fields["ok"] & (rho >= lo) & (rho <= hi)


class TestPointwise:
    def test_sphere_at_half_radius(self):
        u = sphere_field()
        node = u.grid.nearest_node((0.3, 0.4))
        r = float(np.hypot(*u.grid.node_position(node)))
        d = level_set_curvatures(u, node)
        np.testing.assert_allclose(d.kappas, (1 / r, 1 / r), rtol=1e-10)
        assert d.ratio == pytest.approx(0.5, abs=1e-10)
        assert d.grad_norm == pytest.approx(r / 2, rel=1e-10)
        assert d.h * d.grad_norm == pytest.approx(1.0, rel=1e-10)

    def test_sphere_on_axis(self):
        u = sphere_field()
        node = u.grid.nearest_node((0.0, 0.5))
        z = u.grid.node_position(node)[1]
        d = level_set_curvatures(u, node)
        np.testing.assert_allclose(d.kappas, (1 / z, 1 / z), rtol=1e-10)

    def test_cylinder(self):
        u = cylinder_field()
        node = u.grid.nearest_node((0.5, 0.0))
        r = u.grid.node_position(node)[0]
        d = level_set_curvatures(u, node)
        assert d.kappa1 == pytest.approx(0.0, abs=1e-10)
        assert d.kappa_last == pytest.approx(1 / r, rel=1e-10)
        assert d.ratio == pytest.approx(0.0, abs=1e-10)

    def test_circle(self):
        u = circle_field()
        node = u.grid.nearest_node((0.25, 0.0))
        x = u.grid.node_position(node)[0]
        d = level_set_curvatures(u, node)
        assert d.kappas == pytest.approx((1 / abs(x),))
        assert d.h == d.kappa1
        assert d.ratio == 1.0

    def test_critical_point_is_not_regular(self):
        u = circle_field()
        d = level_set_curvatures(u, u.grid.nearest_node((0.0, 0.0)))
        assert not d.regular
        assert d.grad_norm == 0.0

    def test_threshold_floor(self):
        g = DomainSpec("disk", 2).default_grid(101)
        assert regularity_threshold(g) == pytest.approx(10 * g.h)

    def test_stencil_error_at_boundary(self):
        u = circle_field(65)
        with pytest.raises(StencilError):
            level_set_curvatures(u, (0, 0))


class TestArrivalResidual:
    def test_exact_circle(self):
        u = circle_field(256)
        assert arrival_residual(u, shell(u)) <= 5e-3

    def test_quadratic_fields_are_exact(self):
        u = sphere_field()
        K = shell(u) & level_set_curvature_fields(u)["regular"]
        assert arrival_residual(u, K) <= 1e-10

    def test_exact_fields_converge_at_second_order(self):
        # the translating grim reaper: its level sets are y = t - log cos x
        res = []
        for n in (81, 161, 321):
            g = Grid.from_extents("cartesian2d", (-1.0, 0.0), (1.0, 1.0), (n, n))
            x, y = g.coords()
            u = ScalarField(g, y + np.log(np.cos(x)))
            res.append(arrival_residual(u, level_set_curvature_fields(u)["ok"]))
        orders = [math.log2(a / b) for a, b in zip(res, res[1:])]
        assert min(orders) >= 1.8

    def test_scaled_field_is_not_arrival(self):
        u = circle_field(256)
        doubled = u.with_values(2 * u.values)
        assert arrival_residual(doubled, shell(doubled)) >= 0.5

    def test_ladder_field(self, disk_ladder):
        u = u_lambda(disk_ladder.value.solutions[-1])
        K = shell(u) & level_set_curvature_fields(u)["regular"]
        assert arrival_residual(u, K) <= 0.05

    def test_nonregular_node_in_probe(self):
        u = circle_field(129)
        K = shell(u, 0.0, 0.5)
        with pytest.raises(PreconditionError) as info:
            arrival_residual(u, K)
        assert u.grid.nearest_node((0.0, 0.0)) in info.value.nodes

    def test_empty_probe(self):
        u = circle_field(65)
        with pytest.raises(PreconditionError):
            arrival_residual(u, np.zeros(u.grid.shape, dtype=bool))


class TestProductLift:
    def test_positive_kappa_becomes_zero(self):
        d = CurvatureDiagnostics.from_kappas((2.0, 2.0), 0.25, True)
        lift = product_lift(d)
        assert lift.kappa1 == 0.0
        assert lift.h == 4.0

    def test_negative_kappa_kept(self):
        d = CurvatureDiagnostics.from_kappas((-0.3, 2.0), 1.0, True)
        assert product_lift(d).kappa1 == -0.3

    def test_zero_defect(self, rng):
        u = sphere_field()
        nodes = np.argwhere(shell(u) & level_set_curvature_fields(u)["regular"])
        probes = nodes[rng.choice(len(nodes), 100, replace=False)]
        assert product_lift_check(u, probes) == 0.0


class TestRatioBound:
    def test_sphere(self):
        u = sphere_field()
        rb = ratio_bound_check(u, shell(u, 0.2, 0.9))
        assert rb.interior_min == pytest.approx(0.5, abs=1e-9)
        assert rb.boundary_min == pytest.approx(0.5, abs=1e-9)
        # the boundary minimum is positive, so the margin is the interior minimum itself
        assert rb.margin == pytest.approx(0.5, abs=1e-9)
        assert rb.passed

    def test_cylinder(self):
        u = cylinder_field()
        r, z = u.grid.coords()
        K = (r >= 0.1) & (r <= 0.9) & (np.abs(z) <= 0.8)
        rb = ratio_bound_check(u, K)
        assert rb.interior_min == pytest.approx(0.0, abs=1e-9)
        assert rb.boundary_min == pytest.approx(0.0, abs=1e-9)
        assert rb.margin == pytest.approx(0.0, abs=1e-9)

    def test_nonregular_edge(self):
        u = circle_field(129)
        rho = radius(u)
        K = np.abs(rho - 0.5) <= 0.5 + 1e-9
        with pytest.raises(PreconditionError):
            ratio_bound_check(u, K)

    def test_dumbbell_margin(self, dumbbell_ladder):
        u = u_lambda(dumbbell_ladder.value.solutions[-1])
        K = u.interior & (u.values >= 0.02)
        rb = ratio_bound_check(u, K)
        assert rb.margin >= -rb.eps_grid

    def test_ratio_never_exceeds_umbilic_bound(self, ball_ladder):
        u = u_lambda(ball_ladder.value.solutions[-1])
        fields = level_set_curvature_fields(u)
        K = fields["regular"] & shell(u)
        eps = epsilon_grid(fields["ratio"], K, K, u.grid)
        assert fields["ratio"][K].max() <= 0.5 + eps


class TestHelpers:
    def test_relative_boundary_of_square(self):
        K = np.zeros((7, 7), dtype=bool)
        K[1:6, 1:6] = True
        edge = relative_boundary(K)
        assert edge.sum() == 16
        assert not edge[3, 3]

    def test_axis_is_mirror(self):
        g = Grid.with_spacing("axisym_rz", (0.0, -1.0), (1.0, 1.0), 0.1)
        K = np.zeros(g.shape, dtype=bool)
        K[0:4, 5:15] = True
        edge = relative_boundary(K, g)
        assert not edge[0, 10]
        assert edge[3, 10]

    def test_epsilon_of_linear_field(self):
        g = Grid.from_extents("cartesian2d", (0.0, 0.0), (1.0, 1.0), (11, 11))
        X, Y = g.coords()
        everywhere = np.ones(g.shape, dtype=bool)
        assert epsilon_grid(3 * X + Y, everywhere, everywhere, g) == pytest.approx(5 * 0.1 * 3)

    def test_table_columns(self):
        rows = curvature_table(circle_field(33))
        assert set(rows[0]) == {"axis0", "axis1", "kappa1", "kappa_last", "h", "ratio", "grad_norm", "regular"}
