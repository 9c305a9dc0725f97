"""
Appell polynomials p_n of a generating function g, the scaled polynomials
p_n(nx), and the evaluators of their asymptotic main terms.

Normalization: e^{xt}/g(t) = sum_n p_n(x) t^n, so p_n' = p_{n-1}.
"""
import logging
import math
from typing import List, Optional

import mpmath

from app.errors import InvalidArgumentError, PrecisionError
from app.models.schemas import AsymMode, AsymptoticContext, BigPoly, GeneratingFunction, ZeroInfo
from app.services.genfun import check_precision, eval_g, eval_g1, singular_part, taylor_coeffs
from app.services.rootfind import default_precision

logger = logging.getLogger(__name__)

ASYM_PRECISION = 128


def reciprocal_series(gcoeffs: List, n: int, prec: int) -> List:
    """Coefficients c_0 .. c_n of 1/g from the Taylor coefficients of g"""
    check_precision(prec)
    if n < 0:
        raise InvalidArgumentError(f"n must be nonnegative, got {n}")
    if not gcoeffs or gcoeffs[0] == 0:
        raise InvalidArgumentError("g_0 = 0: the reciprocal series does not exist")

    with mpmath.workprec(prec):
        g = [mpmath.mpmathify(c) for c in gcoeffs[: n + 1]]
        g += [mpmath.mpf(0)] * (n + 1 - len(g))
        inv_g0 = 1 / g[0]
        c = [inv_g0]
        for k in range(1, n + 1):
            c.append(-inv_g0 * mpmath.fdot((g[j], c[k - j]) for j in range(1, k + 1)))
        return c


def appell_poly(gf: GeneratingFunction, n: int, prec: int) -> BigPoly:
    """p_n with coefficient c_{n-k}/k! at x^k"""
    if n < 0:
        raise InvalidArgumentError(f"degree must be nonnegative, got {n}")
    c = reciprocal_series(taylor_coeffs(gf, n, prec), n, prec)
    with mpmath.workprec(prec):
        coeffs = []
        inv_fact = mpmath.mpf(1)
        for k in range(n + 1):
            if k:
                inv_fact /= k
            coeffs.append(c[n - k] * inv_fact)
    return BigPoly(coeffs=tuple(coeffs), prec=prec)


def scaled_poly(p: BigPoly, n: int) -> BigPoly:
    """q(x) = p(n x)"""
    with mpmath.workprec(p.prec):
        scale = mpmath.mpf(n)
        coeffs = [c * scale ** k for k, c in enumerate(p.coeffs)]
    return BigPoly(coeffs=tuple(coeffs), prec=p.prec)


def partial_sum(n: int, x, prec: int):
    """S_n(x) = sum_{k<=n} x^k/k!, nested from the top term down"""
    check_precision(prec)
    if n < 0:
        raise InvalidArgumentError(f"n must be nonnegative, got {n}")
    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        s = mpmath.mpf(1)
        for k in range(n, 0, -1):
            s = 1 + s * x / k
        return s


def phi(x):
    return x * mpmath.exp(1 - x)


def I_val(m_minus_1: int, n: int, z, prec: Optional[int] = None):
    """
    I_{m-1}(z) = sum_p (-1)^p p! C(m-1,p) C(n+p-1,p) z^-p.

    The binomial C(n+p-1, p) carries a dependence on n that the usual I notation
    hides, so n is an explicit argument.
    """
    if m_minus_1 < 0:
        raise InvalidArgumentError(f"m-1 must be nonnegative, got {m_minus_1}")
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    with mpmath.workprec(prec or mpmath.mp.prec):
        z = mpmath.mpmathify(z)
        if z == 0:
            raise InvalidArgumentError("I_{m-1}(z) is undefined at z = 0")
        inv_z = 1 / z
        total = mpmath.mpf(0)
        for p in range(m_minus_1 + 1):
            weight = (-1) ** p * math.factorial(p) * math.comb(m_minus_1, p) * math.comb(n + p - 1, p)
            total += weight * inv_z ** p
        return total


def J_val(z: ZeroInfo, n: int, x, prec: int):
    """J(a; nx) = sum_m b_{a,m}/(m-1)! (nx)^{m-1} I_{m-1}(a n x)"""
    check_precision(prec)
    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        if x == 0:
            raise InvalidArgumentError("J(a; nx) needs x != 0")
        if not z.b_coeffs:
            raise InvalidArgumentError(f"zero {z.label()} carries no singular-part coefficients")
        nx = n * x
        total = mpmath.mpf(0)
        for m, b in enumerate(z.b_coeffs, start=1):
            if m == 1:
                total += b
                continue
            total += b / mpmath.factorial(m - 1) * nx ** (m - 1) * I_val(m - 1, n, z.a * nx, prec)
        return total


def J_limit(z: ZeroInfo, n: int, x, prec: int):
    """Leading term of J(a; nx) as n grows: b_{a,beta}/(beta-1)! (nx)^{beta-1} ((ax-1)/(ax))^{beta-1}"""
    check_precision(prec)
    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        if x == 0:
            raise InvalidArgumentError("J(a; nx) needs x != 0")
        k = z.beta - 1
        ax = z.a * x
        return z.b_coeffs[-1] / mpmath.factorial(k) * (n * x) ** k * ((ax - 1) / ax) ** k


def rounding_error_bits(n: int, prec: int) -> float:
    """Bits of relative accuracy guaranteed for exact_normalized"""
    return prec - 10 * n * 1e-3 - 40


def exact_normalized(gf: GeneratingFunction, n: int, x, prec: Optional[int] = None,
                     poly: Optional[BigPoly] = None):
    """f_n(x) = sqrt(2 pi n) p_n(nx) / (e x)^n; pass poly to reuse a scaled polynomial"""
    if n < 1:
        raise InvalidArgumentError(f"f_n needs n >= 1, got {n}")
    floor = default_precision(n)
    prec = prec or floor
    if prec < floor:
        raise PrecisionError(f"f_{n} needs at least {floor} bits, got {prec}")

    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        if x == 0:
            raise InvalidArgumentError("f_n(x) is undefined at x = 0")
        if poly is None or poly.prec < prec or poly.degree != n:
            poly = scaled_poly(appell_poly(gf, n, prec), n)
        value = mpmath.polyval(list(reversed(poly.coeffs)), x)
        # (e x)^n in log form, principal branch
        return mpmath.sqrt(2 * mpmath.pi * n) * value * mpmath.exp(-n * (1 + mpmath.log(x)))


def log_rate(gf: GeneratingFunction, n: int, x, prec: Optional[int] = None,
             poly: Optional[BigPoly] = None) -> float:
    """(1/n) ln|f_n(x)|"""
    value = exact_normalized(gf, n, x, prec, poly)
    with mpmath.workprec(prec or default_precision(n)):
        if value == 0:
            return float("-inf")
        return float(mpmath.log(abs(value)) / n)


def _dominant_terms(ctx: AsymptoticContext, n: int, x, prec: int):
    total = mpmath.mpf(0)
    for z in ctx.dominants:
        total += phi(z.a * x) ** (-n) * J_val(z, n, x, prec)
    return mpmath.sqrt(2 * mpmath.pi * n) * total


def asym_normalized(ctx: AsymptoticContext, n: int, x, mode: AsymMode = AsymMode.exterior,
                    prec: int = ASYM_PRECISION):
    """Main term of f_n(x): 1/g(1/x) outside the disk, minus the dominant-zero corrections inside"""
    mode = AsymMode(mode)
    check_precision(prec)
    with mpmath.workprec(prec):
        x = mpmath.mpmathify(x)
        if x == 0:
            raise InvalidArgumentError("the asymptotic formulas are undefined at x = 0")

        if mode == AsymMode.exterior:
            if abs(x) * ctx.r0 <= 1:
                raise InvalidArgumentError(
                    f"exterior mode needs |x| > 1/r0 = {1 / ctx.r0:.6g}, got |x| = {float(abs(x)):.6g}"
                )
            return 1 / eval_g(ctx.gf, 1 / x, prec)

        for z in ctx.zeros:
            if abs(z.a * x - 1) <= mpmath.ldexp(1, -(prec // 2)):
                raise InvalidArgumentError(f"x = 1/a for the zero a = {z.label()} is a pole of the main term")

        correction = _dominant_terms(ctx, n, x, prec)
        if mode == AsymMode.dominant_sum:
            return 1 / eval_g(ctx.gf, 1 / x, prec) - correction

        # g1 route: (1/x) g1(1/x) + (1/x) sum s_a(1/x)
        t = 1 / x
        g1 = eval_g1(ctx.gf, ctx.rho, t, prec, zeros=ctx.zeros)
        poles = mpmath.fsum(singular_part(z, t) for z in ctx.zeros)
        return t * g1 + t * poles - correction


def szego_ratio_exact(n: int, w, prec: int):
    """S_{n-1}(nw) / e^{nw}"""
    with mpmath.workprec(prec):
        w = mpmath.mpmathify(w)
        return partial_sum(n - 1, n * w, prec) * mpmath.exp(-n * w)


def szego_ratio_approx(n: int, w, region: str, prec: int = ASYM_PRECISION):
    """Main term of S_{n-1}(nw)/e^{nw} in the left half-plane (lhp) or outside the unit disk"""
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    with mpmath.workprec(prec):
        w = mpmath.mpmathify(w)
        denom = mpmath.sqrt(2 * mpmath.pi * n)
        if region == "lhp":
            if mpmath.re(w) >= 1:
                raise InvalidArgumentError(f"lhp approximation needs Re w < 1, got w = {mpmath.nstr(w, 8)}")
            return 1 - phi(w) ** n / (denom * (1 - w))
        if region == "outside":
            if abs(w) <= 1:
                raise InvalidArgumentError(f"outside approximation needs |w| > 1, got w = {mpmath.nstr(w, 8)}")
            return phi(w) ** n / (denom * (w - 1))
        raise InvalidArgumentError(f"unknown region {region!r}; expected 'lhp' or 'outside'")


def _falling(k: int, order: int) -> int:
    out = 1
    for i in range(order):
        out *= k - i
    return out


def _scaled_partial_sum_derivative(n: int, w, y, order: int):
    """D_w^order [w^-n S_{n-1}(w y)], term by term"""
    total = mpmath.mpf(0)
    term = mpmath.mpf(1)  # y^k / k!
    for k in range(n):
        if k:
            term = term * y / k
        total += term * _falling(k - n, order) * w ** (k - n - order)
    return total


def szego_derivative_exact(n: int, w, j: int, prec: int):
    """D_w^{j-1} [w^-n S_{n-1}(nw)]"""
    if j < 1:
        raise InvalidArgumentError(f"derivative order j must be >= 1, got {j}")
    with mpmath.workprec(prec):
        w = mpmath.mpmathify(w)
        if w == 0:
            raise InvalidArgumentError("w must be nonzero")
        return _scaled_partial_sum_derivative(n, w, mpmath.mpf(n), j - 1)


def szego_derivative_approx(n: int, w, j: int, prec: int = ASYM_PRECISION):
    """Left half-plane main term D_w^{j-1}(w^-n e^{nw}) - (j-1)!/sqrt(2 pi n) e^n/(1-w)^j"""
    if j < 1:
        raise InvalidArgumentError(f"derivative order j must be >= 1, got {j}")
    with mpmath.workprec(prec):
        w = mpmath.mpmathify(w)
        if w == 0 or mpmath.re(w) >= 1:
            raise InvalidArgumentError(f"need w != 0 and Re w < 1, got w = {mpmath.nstr(w, 8)}")
        # Leibniz rule on w^-n * e^{nw}
        order = j - 1
        smooth = mpmath.fsum(
            math.comb(order, i) * _falling(-n, i) * w ** (-n - i) * mpmath.mpf(n) ** (order - i)
            for i in range(order + 1)
        ) * mpmath.exp(n * w)
        return smooth - mpmath.factorial(order) / mpmath.sqrt(2 * mpmath.pi * n) * mpmath.exp(n) / (1 - w) ** j


def check_integral_identity(n: int, w, x, eps: float, nodes: int, prec: int, j: int = 1):
    """
    Trapezoid rule for (1/2 pi i) \\oint_{|t|=eps} (e^{xt}/t)^n dt/(t-w)^j against
    -1/(j-1)! D_w^{j-1}(w^-n S_{n-1}(wxn)). Returns (lhs, rhs).
    """
    check_precision(prec)
    if nodes < 1 or nodes & (nodes - 1):
        raise InvalidArgumentError(f"nodes must be a power of 2, got {nodes}")
    if j < 1:
        raise InvalidArgumentError(f"order j must be >= 1, got {j}")
    with mpmath.workprec(prec):
        w = mpmath.mpmathify(w)
        x = mpmath.mpmathify(x)
        eps = mpmath.mpf(eps)
        if eps >= abs(w):
            raise InvalidArgumentError(f"eps = {eps} must be smaller than |w| = {mpmath.nstr(abs(w), 8)}")

        # dt = i t d(theta), so (1/2 pi i) \oint f dt is the mean of t f(t)
        samples = []
        for k in range(nodes):
            t = eps * mpmath.expjpi(mpmath.mpf(2 * k) / nodes)
            samples.append(t * (mpmath.exp(x * t) / t) ** n / (t - w) ** j)
        lhs = mpmath.fsum(samples) / nodes

        rhs = -_scaled_partial_sum_derivative(n, w, x * n, j - 1) / mpmath.factorial(j - 1)
    logger.debug(f"Integral identity n={n} j={j}: lhs={mpmath.nstr(lhs, 12)} rhs={mpmath.nstr(rhs, 12)}")
    return lhs, rhs
