import math

import numpy as np
import pytest

from app.errors import InvalidArgumentError
from app.models.schemas import Dominance, PieceKind, Rectangle, RegionKind, ZeroInfo
from app.services.attractor import (
    Phi,
    asymptotic_context,
    bisector,
    build_attractor,
    classify_dominance,
    curve_curve_intersections,
    dominance_radius,
    dominates,
    grid_scan,
    in_R_rho,
    inside_szego,
    lambert_w_inv_e,
    line_intersection,
    phi_abs,
    predicted_log_rate,
    region_of,
    szego_samples,
)
from app.services.genfun import zeros_up_to
from app.services.validate import hausdorff

INV_PI_E = 1.0 / (math.pi * math.e)


def zero(a: complex, cls: int = 0, dominance: Dominance = Dominance.minimal) -> ZeroInfo:
    return ZeroInfo(a=a, beta=1, modulus_class=cls, dominance=dominance)


class TestSzegoCurve:
    def test_lambert_constant(self):
        assert lambert_w_inv_e() == pytest.approx(0.2784645427610738, abs=1e-15)
        assert dominance_radius(1.0) == pytest.approx(1 / 0.2784645427610738)

    def test_real_axis_crossings(self):
        curve = np.array(szego_samples(1, 512).samples)
        assert curve[0] == pytest.approx(1.0)
        assert curve[-1] == pytest.approx(1.0)
        assert np.min(np.abs(curve + lambert_w_inv_e())) < 1e-12

    def test_samples_lie_on_the_level_set(self):
        curve = np.array(szego_samples(1, 512).samples)
        assert np.max(np.abs(phi_abs(curve) - 1.0)) < 1e-9
        assert np.all(curve.real <= 1.0 + 1e-12)

    def test_scaled_copy(self):
        a = 2j
        curve = np.array(szego_samples(a, 256).samples)
        assert np.max(np.abs(phi_abs(a * curve) - 1.0)) < 1e-9
        assert curve[0] == pytest.approx(1 / a)

    def test_conjugate_symmetry(self):
        curve = np.array(szego_samples(1, 256).samples)
        assert np.max(np.abs(np.sort_complex(curve) - np.sort_complex(np.conj(curve)))) < 1e-12

    @pytest.mark.parametrize("x,inside", [(0.5, True), (2.0, False), (0.9j, False)])
    def test_inside(self, x, inside):
        assert inside_szego(1, x) is inside


class TestDominance:
    def test_bessel_has_two_dominant_zeros(self, bessel):
        zeros = classify_dominance(zeros_up_to(bessel, 9.0, 128))
        dominant = sorted(z.value.real for z in zeros if z.is_dominant)
        assert dominant == pytest.approx([-2.404825558, 2.404825558], abs=1e-9)
        assert len(zeros) == 6

    def test_three_roots_all_dominant(self, three_roots):
        zeros = classify_dominance(zeros_up_to(three_roots, 2.0, 128))
        assert all(z.is_dominant and z.is_proper for z in zeros)

    def test_cubic_all_dominant(self, cubic):
        zeros = classify_dominance(zeros_up_to(cubic, 2.0, 128))
        assert [z.dominance for z in zeros] == [
            Dominance.minimal, Dominance.proper_dominant, Dominance.proper_dominant
        ]

    def test_beyond_the_radius_bound(self):
        zeros = classify_dominance([zero(1.0), zero(4.0, cls=1, dominance=Dominance.unclassified)])
        assert zeros[1].dominance == Dominance.non_dominant

    def test_improper_dominant(self):
        # 1/b on the curve (1/a) S: b = 1/x for a curve point x
        x = complex(szego_samples(1, 512).samples[100])
        b = 1 / x
        zeros = classify_dominance([zero(1.0), zero(b, cls=1, dominance=Dominance.unclassified)], tol_improper=1e-6)
        assert zeros[1].dominance == Dominance.improper_dominant
        assert zeros[1].is_dominant and not zeros[1].is_proper


class TestBisectors:
    def test_vertical_line(self):
        line = bisector(zero(1.0), zero(2.0))
        assert (line.alpha, line.beta) == (1.0, 0.0)
        assert line.c == pytest.approx(math.log(2))

    def test_conjugate_pair_gives_real_axis(self):
        line = bisector(zero(1j * math.pi), zero(-1j * math.pi))
        assert line.alpha == pytest.approx(0.0)
        assert line.beta == pytest.approx(-2 * math.pi)
        assert line.c == 0.0

    def test_equal_moduli_pass_through_origin(self):
        line = bisector(zero(1.0), zero(1j))
        assert line.c == 0.0
        assert line.residual(0j) == 0.0

    def test_same_zero_rejected(self):
        with pytest.raises(InvalidArgumentError):
            bisector(zero(1.0), zero(1.0))

    def test_points_on_the_line_tie(self):
        a, b = zero(1.2 * np.exp(3j * np.pi / 16)), zero(1.5)
        line = bisector(a, b)
        for tau in (-1.0, 0.0, 0.7):
            x = line.foot() + tau * line.direction()
            assert phi_abs(a.value * x) == pytest.approx(phi_abs(b.value * x))

    def test_dominates_contains_own_center(self):
        a, b = zero(1j * math.pi), zero(-1j * math.pi)
        assert dominates(a, b, 1 / a.value)
        assert not dominates(b, a, 1 / a.value)
        assert dominates(b, a, 1 / b.value)


class TestIntersections:
    def test_disjoint_curves(self):
        assert curve_curve_intersections(zero(1.0), zero(100.0)) == []

    def test_conjugate_pair(self):
        points = sorted(curve_curve_intersections(zero(1j * math.pi), zero(-1j * math.pi)), key=lambda p: p.real)
        assert len(points) == 2
        assert points[0] == pytest.approx(-INV_PI_E, abs=1e-12)
        assert points[1] == pytest.approx(INV_PI_E, abs=1e-12)

    def test_concurrent_bisectors(self, three_roots_ctx):
        a, b, c = three_roots_ctx.dominants
        p = line_intersection(bisector(a, b), bisector(b, c))
        q = line_intersection(bisector(a, b), bisector(a, c))
        assert abs(p - q) <= 1e-12

    def test_parallel_lines(self):
        assert line_intersection(bisector(zero(1.0), zero(2.0)), bisector(zero(1.0), zero(3.0))) is None


class TestRegions:
    def test_single_dominant(self):
        dominants = [zero(1.0)]
        assert region_of(0.5, dominants).kind == RegionKind.interior
        assert region_of(1.0, dominants).kind == RegionKind.boundary_arc
        assert region_of(2.0, dominants).kind == RegionKind.exterior
        assert region_of(-1.0, dominants).kind == RegionKind.exterior

    def test_segment_between_conjugates(self, euler_ctx):
        region = region_of(0.05, euler_ctx.dominants)
        assert region.kind == RegionKind.boundary_segment
        assert len(region.owners) == 2

    def test_off_axis_points_have_one_owner(self, euler_ctx):
        region = region_of(0.05 + 0.05j, euler_ctx.dominants)
        assert region.kind == RegionKind.interior
        assert region.owners[0].value.imag < 0

    def test_origin_rejected(self):
        with pytest.raises(InvalidArgumentError):
            region_of(0, [zero(1.0)])

    def test_Phi(self):
        assert Phi(0.5, [zero(1.0)]) == pytest.approx(1 / (0.5 * math.exp(0.5)))
        assert Phi(1.0, [zero(1.0)]) == pytest.approx(1.0)
        assert Phi(1.0, [zero(1.0), zero(2.0)]) == pytest.approx(math.exp(1.0) / 2)

    def test_predicted_log_rate(self):
        dominants = [zero(1.0)]
        assert predicted_log_rate(0.5, dominants) == pytest.approx(-math.log(0.5) - 0.5)
        assert predicted_log_rate(-2.0, dominants) == 0.0
        assert predicted_log_rate(1.0, dominants) is None

    def test_R_rho(self, szego_ctx):
        zeros = szego_ctx.zeros
        assert not in_R_rho(3.0, szego_ctx.dominants, zeros, 2.0)
        assert in_R_rho(-1.0, szego_ctx.dominants, zeros, 2.0)
        assert not in_R_rho(1.0, szego_ctx.dominants, zeros, 2.0)
        assert not in_R_rho(-0.1, szego_ctx.dominants, zeros, 2.0)

    def test_grid_scan_sees_both_cells(self, euler_ctx):
        box = Rectangle(re_min=-0.4, re_max=0.4, im_min=-0.4, im_max=0.4)
        cells = grid_scan(euler_ctx.dominants, box, 0.05)
        owners = {r.owners[0].label() for _, r in cells if r.kind == RegionKind.interior}
        assert owners == {z.label() for z in euler_ctx.dominants}
        # the owner flips across the real axis
        for x, r in cells:
            if r.kind == RegionKind.interior and abs(x.imag) > 1e-9:
                assert (r.owners[0].value.imag < 0) == (x.imag > 0)


class TestBuildAttractor:
    def test_single_dominant_is_the_full_curve(self, szego_ctx):
        geometry = build_attractor(szego_ctx.dominants, resolution=256)
        assert len(geometry.arcs) == 1
        assert geometry.segments == []
        assert {p.kind for p in geometry.all_points} == {PieceKind.arc}

    def test_euler_two_arcs_and_a_segment(self, euler_ctx):
        geometry = build_attractor(euler_ctx.dominants, resolution=512)
        assert len(geometry.arcs) == 2
        assert len(geometry.segments) == 1
        start, end = sorted(geometry.segments[0].endpoints, key=lambda p: p.real)
        assert start == pytest.approx(-INV_PI_E, abs=1e-9)
        assert end == pytest.approx(INV_PI_E, abs=1e-9)
        assert all(abs(p.imag) < 1e-12 for p in geometry.segments[0].points)

    def test_three_roots(self, three_roots_ctx):
        geometry = build_attractor(three_roots_ctx.dominants, resolution=1024)
        assert len(geometry.arcs) == 3
        assert len(geometry.segments) == 3

    def test_segments_are_ties_between_their_owners(self, three_roots_ctx):
        geometry = build_attractor(three_roots_ctx.dominants, resolution=1024)
        values = np.array([z.value for z in three_roots_ctx.dominants])
        for seg in geometry.segments:
            a, b = (z.value for z in seg.owners)
            for x in seg.points:
                levels = phi_abs(values * x)
                assert phi_abs(a * x) == pytest.approx(phi_abs(b * x), rel=1e-9)
                assert phi_abs(a * x) <= levels.min() * (1 + 1e-9)

    @pytest.mark.parametrize("ctx", ["euler_ctx", "three_roots_ctx", "szego_ctx"])
    def test_points_stay_in_the_dominant_disk(self, request, ctx):
        context = request.getfixturevalue(ctx)
        geometry = build_attractor(context.dominants, resolution=512)
        assert max(abs(p.point) for p in geometry.all_points) <= 1 / context.r0 + 1e-9

    def test_conjugate_pair_gives_symmetric_geometry(self, euler_ctx):
        points = build_attractor(euler_ctx.dominants, resolution=512).points()
        assert hausdorff(points, [complex(p).conjugate() for p in points]) < 1e-9

    def test_arcs_stay_on_the_minimum(self, three_roots_ctx):
        geometry = build_attractor(three_roots_ctx.dominants, resolution=1024)
        values = np.array([z.value for z in three_roots_ctx.dominants])
        for arc in geometry.arcs:
            for x in arc.points:
                levels = phi_abs(values * x)
                assert phi_abs(arc.owner.value * x) <= levels.min() * (1 + 1e-9)

    def test_improper_zeros_are_excluded(self):
        x = complex(szego_samples(1, 512).samples[100])
        improper = zero(1 / x, cls=1, dominance=Dominance.improper_dominant)
        geometry = build_attractor([zero(1.0), improper], resolution=256)
        assert [z.label() for z in geometry.excluded] == [improper.label()]
        assert len(geometry.arcs) == 1

    def test_needs_a_proper_dominant(self):
        with pytest.raises(InvalidArgumentError):
            build_attractor([zero(2.0, cls=1, dominance=Dominance.improper_dominant)])


class TestContext:
    def test_rho_must_clear_the_dominants(self, cubic):
        with pytest.raises(InvalidArgumentError):
            asymptotic_context(cubic, 0.5, 128)

    def test_rho_must_reach_every_dominant(self, cubic):
        # the pair +-i sqrt2 is dominant but lies beyond rho = 1.2
        with pytest.raises(InvalidArgumentError, match="dominant"):
            asymptotic_context(cubic, 1.2, 128)

    def test_small_rho_without_hidden_dominants(self, one_minus_t):
        ctx = asymptotic_context(one_minus_t, 1.5, 128)
        assert [z.label() for z in ctx.dominants] == [z.label() for z in ctx.zeros]

    def test_dominants_are_the_dominant_zeros(self, euler_ctx):
        assert euler_ctx.r0 == pytest.approx(math.pi)
        assert len(euler_ctx.dominants) == 2
