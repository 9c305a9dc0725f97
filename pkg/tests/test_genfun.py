import math

import mpmath
import pytest
from pydantic import ValidationError

from app.errors import InvalidArgumentError, PrecisionError
from app.models.schemas import GeneratingFunction
from app.services.genfun import (
    eval_g,
    eval_g1,
    eval_series,
    singular_part_coeffs,
    taylor_coeffs,
    zeros_up_to,
)
from tests.conftest import catalog, close

PREC = 128


class TestTaylorCoeffs:
    def test_one_minus_t(self, one_minus_t):
        assert taylor_coeffs(one_minus_t, 4, PREC) == [1, -1, 0, 0, 0]

    def test_euler(self, euler):
        coeffs = taylor_coeffs(euler, 2, PREC)
        assert [float(c) for c in coeffs] == [1.0, 0.5, 0.25]

    def test_bessel(self, bessel):
        coeffs = taylor_coeffs(bessel, 4, PREC)
        expected = [1, 0, mpmath.mpf(-1) / 4, 0, mpmath.mpf(1) / 64]
        assert all(close(c, e) for c, e in zip(coeffs, expected))

    def test_cubic_expands_the_product(self, cubic):
        # (t - 1)(t^2 + 2) = -2 + 2t - t^2 + t^3
        coeffs = taylor_coeffs(cubic, 3, PREC)
        assert all(close(c, e) for c, e in zip(coeffs, [-2, 2, -1, 1]))

    def test_catalog_order_is_a_power(self):
        squared = taylor_coeffs(catalog("one_minus_t", order=2), 3, PREC)
        assert squared == [1, -2, 1, 0]

    def test_series_matches_closed_form(self, euler, bessel):
        for gf in (euler, bessel):
            with mpmath.workprec(PREC):
                assert close(eval_series(gf, mpmath.mpf("1.3"), PREC), eval_g(gf, mpmath.mpf("1.3"), PREC), 1e-30)

    def test_precisions_agree(self, bessel, euler):
        for gf in (bessel, euler, catalog("bernoulli", order=2)):
            coarse = taylor_coeffs(gf, 12, 128)
            fine = taylor_coeffs(gf, 12, 256)
            assert all(close(c, f, 2.0 ** -100 * max(1, abs(f))) for c, f in zip(coarse, fine))

    def test_precision_floor(self, euler):
        with pytest.raises(PrecisionError):
            taylor_coeffs(euler, 3, 32)


class TestDocuments:
    def test_root_at_origin_rejected(self):
        with pytest.raises(ValidationError):
            GeneratingFunction(kind="poly", roots=[{"re": 0, "im": 0}])

    def test_mixed_root_forms_rejected(self):
        with pytest.raises(ValidationError):
            GeneratingFunction(kind="poly", roots=[{"re": 1, "modulus": 2}])

    def test_catalog_needs_name(self):
        with pytest.raises(ValidationError):
            GeneratingFunction(kind="catalog")

    def test_hyphenated_catalog_names(self):
        assert GeneratingFunction(kind="catalog", name="exp-reciprocal").name.value == "one_minus_t"
        assert GeneratingFunction(kind="catalog", name="bessel-j0").name.value == "bessel_j0"

    def test_polar_root(self):
        gf = GeneratingFunction(kind="poly", roots=[{"modulus": 2, "arg_over_pi": 0.5}])
        zeros = zeros_up_to(gf, 3.0, PREC)
        assert close(zeros[0].a, mpmath.mpc(0, 2), 1e-30)


class TestZerosUpTo:
    def test_euler(self, euler):
        zeros = zeros_up_to(euler, 4.0, PREC)
        assert [z.value for z in zeros] == pytest.approx([1j * math.pi, -1j * math.pi])
        assert all(z.beta == 1 and z.modulus_class == 0 for z in zeros)

    def test_bessel(self, bessel):
        zeros = zeros_up_to(bessel, 3.0, PREC)
        assert sorted(z.value.real for z in zeros) == pytest.approx([-2.404825558, 2.404825558], abs=1e-9)

    def test_cubic_modulus_classes(self, cubic):
        zeros = zeros_up_to(cubic, 2.0, PREC)
        assert len(zeros) == 3
        assert zeros[0].value == pytest.approx(1.0)
        assert [z.modulus_class for z in zeros] == [0, 1, 1]
        assert abs(zeros[1].value) == pytest.approx(2 ** 0.5)

    def test_multiplicity_from_order(self):
        zeros = zeros_up_to(catalog("euler", order=3), 4.0, PREC)
        assert {z.beta for z in zeros} == {3}

    def test_bernoulli(self):
        zeros = zeros_up_to(catalog("bernoulli"), 13.0, PREC)
        assert sorted(z.value.imag for z in zeros) == pytest.approx([-4 * math.pi, -2 * math.pi, 2 * math.pi, 4 * math.pi])
        assert all(abs(z.value.real) < 1e-30 for z in zeros)
        assert [z.modulus_class for z in zeros] == [0, 0, 1, 1]

    def test_rho_on_a_zero_modulus(self, euler):
        with pytest.raises(InvalidArgumentError):
            zeros_up_to(euler, float(mpmath.pi), PREC)

    def test_no_zeros_below_rho(self, one_minus_t):
        with pytest.raises(InvalidArgumentError):
            zeros_up_to(one_minus_t, 0.5, PREC)


class TestSingularParts:
    def test_simple_pole(self, one_minus_t):
        zero = zeros_up_to(one_minus_t, 2.0, PREC)[0]
        assert len(zero.b_coeffs) == 1
        assert close(zero.b_coeffs[0], -1, 1e-30)

    def test_double_pole(self):
        gf = catalog("one_minus_t", order=2)
        zero = zeros_up_to(gf, 2.0, PREC)[0]
        b = singular_part_coeffs(gf, zero, PREC)
        assert close(b[0], -1, 1e-18)
        assert close(b[1], 1, 1e-18)

    def test_euler_residue(self, euler):
        zero = zeros_up_to(euler, 4.0, PREC)[0]
        with mpmath.workprec(PREC):
            expected = 2j / mpmath.pi
        assert close(zero.b_coeffs[0], expected, 1e-30)

    def test_conjugate_zeros_have_conjugate_parts(self):
        upper, lower = zeros_up_to(catalog("euler", order=2), 4.0, PREC)
        assert close(upper.a, mpmath.conj(lower.a), 1e-30)
        for b_up, b_low in zip(upper.b_coeffs, lower.b_coeffs):
            assert close(b_up, mpmath.conj(b_low), 1e-15)

    def test_quadrature_agrees_with_residue_formula(self, euler):
        zero = zeros_up_to(euler, 4.0, PREC)[0]
        quadrature = singular_part_coeffs(euler, zero, PREC, method="quadrature")
        assert close(quadrature[0], zero.b_coeffs[0], 1e-18)


class TestG1:
    def test_keeps_the_pole_at_zero(self, one_minus_t):
        # 1/(t(1-t)) - 1/(1-t) = 1/t
        assert close(eval_g1(one_minus_t, 2.0, mpmath.mpf("0.5"), PREC), 2, 1e-30)
        with mpmath.workprec(PREC):
            third = mpmath.mpf(1) / 3
        assert close(eval_g1(one_minus_t, 2.0, 3, PREC), third, 1e-30)

    def test_rejects_origin(self, one_minus_t):
        with pytest.raises(InvalidArgumentError):
            eval_g1(one_minus_t, 2.0, 0, PREC)

    def test_removable_singularity(self, one_minus_t):
        assert close(eval_g1(one_minus_t, 2.0, 1, PREC), 1, 1e-12)

    def test_analytic_across_poles(self, euler):
        zeros = zeros_up_to(euler, 4.0, PREC)
        with mpmath.workprec(PREC):
            near = 1j * mpmath.pi + mpmath.mpf("1e-6")
            far = 1j * mpmath.pi + mpmath.mpf("2e-6")
            step = eval_g1(euler, 4.0, far, PREC, zeros) - eval_g1(euler, 4.0, near, PREC, zeros)
        assert abs(step) < 1e-4
