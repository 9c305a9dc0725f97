"""
Generating functions g(t): Taylor coefficients, zeros below a cutoff, and the
singular parts of 1/(t g(t)) at those zeros.
"""
import logging
from functools import lru_cache
from typing import List, Optional, Tuple

import mpmath

from app.config import settings
from app.errors import InvalidArgumentError, NonConvergenceError, PrecisionError
from app.models.schemas import (
    CatalogName,
    Dominance,
    GenFunKind,
    GeneratingFunction,
    ZeroInfo,
)

logger = logging.getLogger(__name__)


def check_precision(prec: int) -> None:
    """Reject working precisions below the supported floor"""
    if prec < settings.min_precision:
        raise PrecisionError(f"precision {prec} bits is below the minimum of {settings.min_precision}")


def _number(value) -> mpmath.mpf:
    # str keeps decimal input exact to the working precision; float is exact in binary
    return mpmath.mpf(value if isinstance(value, str) else float(value))


def explicit_roots(gf: GeneratingFunction) -> List[Tuple[mpmath.mpc, int]]:
    """Roots and multiplicities of an explicit polynomial at the current precision"""
    roots = []
    for spec in gf.roots:
        if spec.modulus is not None:
            value = _number(spec.modulus) * mpmath.expjpi(_number(spec.arg_over_pi or 0.0))
        else:
            value = mpmath.mpc(_number(spec.re or 0.0), _number(spec.im or 0.0))
        roots.append((mpmath.mpc(value), spec.mult))
    return roots


def _scale(gf: GeneratingFunction) -> mpmath.mpc:
    return mpmath.mpc(_number(gf.scale.re), _number(gf.scale.im))


def _series_mul(a: List, b: List, count: int) -> List:
    out = []
    for k in range(count + 1):
        out.append(mpmath.fdot((a[j], b[k - j]) for j in range(k + 1) if j < len(a) and k - j < len(b)))
    return out


def _series_pow(base: List, m: int, count: int) -> List:
    result = [mpmath.mpf(1)] + [mpmath.mpf(0)] * count
    power = list(base)
    while m:
        if m & 1:
            result = _series_mul(result, power, count)
        m >>= 1
        if m:
            power = _series_mul(power, power, count)
    return result


def _base_series(name: CatalogName, count: int) -> List:
    """Taylor coefficients of the order-1 catalog function"""
    if name == CatalogName.one_minus_t:
        coeffs = [mpmath.mpf(1), mpmath.mpf(-1)] + [mpmath.mpf(0)] * count
        return coeffs[: count + 1]
    if name == CatalogName.euler:
        # (e^t + 1)/2
        return [mpmath.mpf(1)] + [1 / (2 * mpmath.factorial(k)) for k in range(1, count + 1)]
    if name == CatalogName.bernoulli:
        # (e^t - 1)/t
        return [1 / mpmath.factorial(k + 1) for k in range(count + 1)]
    # J0: (-1)^k / (4^k (k!)^2) at t^(2k)
    coeffs = []
    for j in range(count + 1):
        if j % 2:
            coeffs.append(mpmath.mpf(0))
        else:
            k = j // 2
            coeffs.append((-1) ** k / (mpmath.mpf(4) ** k * mpmath.factorial(k) ** 2))
    return coeffs


def taylor_coeffs(gf: GeneratingFunction, count: int, prec: int) -> List:
    """First count+1 Taylor coefficients g_0 .. g_count of g at 0"""
    check_precision(prec)
    if count < 0:
        raise InvalidArgumentError(f"count must be nonnegative, got {count}")

    with mpmath.workprec(prec):
        if gf.kind == GenFunKind.poly:
            coeffs = [_scale(gf)]
            for root, mult in explicit_roots(gf):
                for _ in range(mult):
                    # multiply by (t - root)
                    shifted = [mpmath.mpf(0)] + coeffs
                    coeffs = [s - root * c for s, c in zip(shifted, coeffs + [mpmath.mpf(0)])]
            coeffs = coeffs[: count + 1] + [mpmath.mpf(0)] * max(0, count + 1 - len(coeffs))
        else:
            base = _base_series(gf.name, count)
            coeffs = base if gf.order == 1 else _series_pow(base, gf.order, count)

        if coeffs[0] == 0:
            raise InvalidArgumentError("g(0) = 0: the generating function must not vanish at 0")
        return [+c for c in coeffs]


def series_order(gf: GeneratingFunction, radius: float, prec: int) -> int:
    """Truncation order whose tail bound on |t| <= radius is below 2^-prec"""
    if gf.kind == GenFunKind.poly:
        return sum(spec.mult for spec in gf.roots)
    if gf.name == CatalogName.one_minus_t:
        return gf.order
    # every catalog series is majorized by e^(m t): |g_k| <= m^k / k!
    q = gf.order * radius
    target = mpmath.ldexp(1, -prec)
    order = int(q) + 1
    with mpmath.workprec(64):
        while True:
            term = mpmath.power(q, order + 1) / mpmath.factorial(order + 1)
            ratio = q / (order + 2)
            if ratio < 1 and term / (1 - ratio) < target:
                return order
            order += 1


def eval_series(gf: GeneratingFunction, t, prec: int):
    """g(t) from its truncated Taylor series, truncation chosen by series_order"""
    with mpmath.workprec(prec):
        t = mpmath.mpmathify(t)
        order = series_order(gf, float(abs(t)), prec + 8)
        coeffs = taylor_coeffs(gf, order, prec)
        return mpmath.polyval(coeffs[::-1], t)


def _base_value(name: CatalogName, t):
    if name == CatalogName.one_minus_t:
        return 1 - t
    if name == CatalogName.euler:
        return (mpmath.exp(t) + 1) / 2
    if name == CatalogName.bernoulli:
        return mpmath.mpf(1) if t == 0 else mpmath.expm1(t) / t
    return mpmath.besselj(0, t)


def _base_derivative(name: CatalogName, t):
    if name == CatalogName.one_minus_t:
        return mpmath.mpf(-1)
    if name == CatalogName.euler:
        return mpmath.exp(t) / 2
    if name == CatalogName.bernoulli:
        if t == 0:
            return mpmath.mpf(1) / 2
        # (t e^t - e^t + 1)/t^2 cancels near 0; pay for it in guard bits
        extra = 20 + max(0, -2 * int(mpmath.floor(mpmath.log(abs(t), 2))))
        with mpmath.extraprec(extra):
            return (t * mpmath.exp(t) - mpmath.expm1(t)) / t ** 2
    return -mpmath.besselj(1, t)


def eval_g(gf: GeneratingFunction, t, prec: int):
    """g(t) from its closed form"""
    check_precision(prec)
    with mpmath.workprec(prec):
        t = mpmath.mpmathify(t)
        if gf.kind == GenFunKind.poly:
            value = _scale(gf)
            for root, mult in explicit_roots(gf):
                value *= (t - root) ** mult
            return value
        return _base_value(gf.name, t) ** gf.order


def eval_g_prime(gf: GeneratingFunction, t, prec: int):
    """g'(t): product rule for polynomials, closed forms for catalog entries"""
    check_precision(prec)
    with mpmath.workprec(prec):
        t = mpmath.mpmathify(t)
        if gf.kind == GenFunKind.poly:
            roots = explicit_roots(gf)
            total = mpmath.mpf(0)
            for i, (root, mult) in enumerate(roots):
                term = mult * (t - root) ** (mult - 1)
                for j, (other, other_mult) in enumerate(roots):
                    if j != i:
                        term *= (t - other) ** other_mult
                total += term
            return _scale(gf) * total
        m = gf.order
        base = _base_value(gf.name, t)
        return m * base ** (m - 1) * _base_derivative(gf.name, t)


@lru_cache(maxsize=None)
def _bessel_zero(k: int, prec: int) -> mpmath.mpf:
    """k-th positive zero of J0: McMahon guess, then Newton to full precision"""
    with mpmath.workprec(prec + 16):
        b = (k - mpmath.mpf(1) / 4) * mpmath.pi
        e = 8 * b
        j = b + 1 / e - mpmath.mpf(124) / (3 * e ** 3) + mpmath.mpf(120928) / (15 * e ** 5)
        tol = mpmath.ldexp(1, -(prec + 8))
        for _ in range(200):
            step = mpmath.besselj(0, j) / mpmath.besselj(1, j)
            j += step
            if abs(step) <= tol * j:
                return j
    raise NonConvergenceError(f"Newton refinement of J0 zero #{k} did not converge at {prec} bits")


def _raw_zeros(gf: GeneratingFunction, radius, prec: int) -> List[Tuple[mpmath.mpc, int]]:
    """All zeros of g with modulus below radius, with multiplicities (unsorted)"""
    m = gf.order
    found = []
    with mpmath.workprec(prec):
        if gf.kind == GenFunKind.poly:
            return [(a, mult) for a, mult in explicit_roots(gf) if abs(a) < radius]
        if gf.name == CatalogName.one_minus_t:
            if 1 < radius:
                found.append((mpmath.mpc(1), m))
        elif gf.name == CatalogName.euler:
            k = 0
            while mpmath.pi * (2 * k + 1) < radius:
                mod = mpmath.pi * (2 * k + 1)
                found += [(mpmath.mpc(0, mod), m), (mpmath.mpc(0, -mod), m)]
                k += 1
        elif gf.name == CatalogName.bernoulli:
            k = 1
            while 2 * mpmath.pi * k < radius:
                mod = 2 * mpmath.pi * k
                found += [(mpmath.mpc(0, mod), m), (mpmath.mpc(0, -mod), m)]
                k += 1
        else:
            k = 1
            while True:
                j = +_bessel_zero(k, prec)
                if j >= radius:
                    break
                found += [(mpmath.mpc(j), m), (mpmath.mpc(-j), m)]
                k += 1
    return found


def zeros_up_to(gf: GeneratingFunction, rho: float, prec: int) -> List[ZeroInfo]:
    """Zeros of g with modulus below rho, sorted by modulus class"""
    check_precision(prec)
    margin = settings.rho_margin
    with mpmath.workprec(prec):
        nearby = _raw_zeros(gf, mpmath.mpf(rho) * (1 + 2 * margin), prec)
        for a, _ in nearby:
            if abs(abs(a) / rho - 1) < margin:
                raise InvalidArgumentError(
                    f"rho={rho} collides with the zero modulus {mpmath.nstr(abs(a), 12)}; "
                    f"choose rho strictly between zero moduli"
                )
        raw = [(a, mult) for a, mult in nearby if abs(a) < rho]
        if not raw:
            raise InvalidArgumentError(f"g has no zeros of modulus below rho={rho}")

        # group moduli into classes r_0 < r_1 < ...
        raw.sort(key=lambda entry: float(abs(entry[0])))
        classes = []
        current, anchor = -1, None
        for a, _ in raw:
            if anchor is None or abs(a) > anchor * (1 + settings.modulus_rel_tol):
                current += 1
                anchor = abs(a)
            classes.append(current)

        ordered = sorted(
            zip(raw, classes),
            key=lambda item: (item[1], -float(mpmath.im(item[0][0])), -float(mpmath.re(item[0][0]))),
        )
        zeros = []
        for (a, mult), cls in ordered:
            info = ZeroInfo(
                a=a,
                beta=mult,
                modulus_class=cls,
                dominance=Dominance.minimal if cls == 0 else Dominance.unclassified,
            )
            zeros.append(info.model_copy(update={"b_coeffs": tuple(singular_part_coeffs(gf, info, prec))}))

    logger.info(f"Found {len(zeros)} zeros of {gf.label()} below rho={rho} in {classes[-1] + 1} modulus classes")
    return zeros


def _reciprocal_tg(gf: GeneratingFunction, t, prec: int):
    return 1 / (t * eval_g(gf, t, prec))


def singular_part_coeffs(gf: GeneratingFunction, z: ZeroInfo, prec: int, method: str = "auto") -> List:
    """Coefficients b_{a,1..beta} of the principal part of 1/(t g(t)) at the zero a"""
    check_precision(prec)
    if z.beta == 1 and method == "auto":
        with mpmath.workprec(prec):
            return [1 / (z.a * eval_g_prime(gf, z.a, prec))]
    return _laurent_by_quadrature(gf, z.a, z.beta, prec)


def _laurent_by_quadrature(gf: GeneratingFunction, a, beta: int, prec: int) -> List:
    """Trapezoid rule on |t - a| = r for b_m = (1/2 pi i) \\oint (t-a)^(m-1) dt / (t g(t))"""
    with mpmath.workprec(prec + 16):
        others = [b for b, _ in _raw_zeros(gf, 2 * abs(a) * (1 + mpmath.mpf(10) ** -6), prec + 16)
                  if abs(b - a) > abs(a) * mpmath.ldexp(1, -(prec // 2))]
        gap = min((abs(b - a) for b in others), default=mpmath.inf)
        r = min(abs(a), gap) / 4
        if r < mpmath.ldexp(1, -(prec // 4)):
            raise PrecisionError(f"quadrature radius {mpmath.nstr(r, 5)} underflows at {prec} bits: zeros too clustered")

        tol = mpmath.ldexp(1, -(prec // 2))
        nodes = settings.quadrature_node_start
        samples = []  # (r*w, f(a + r*w)) pairs

        def add_nodes(count: int, offset: int, stride: int) -> None:
            for k in range(offset, count, stride):
                w = r * mpmath.expjpi(mpmath.mpf(2 * k) / count)
                samples.append((w, _reciprocal_tg(gf, a + w, prec + 16)))

        add_nodes(nodes, 0, 1)
        previous = None
        while True:
            coeffs = [mpmath.fsum(w ** m * f for w, f in samples) / len(samples) for m in range(1, beta + 1)]
            if previous is not None:
                scale = max(abs(c) for c in coeffs)
                drift = max(abs(c - p) for c, p in zip(coeffs, previous))
                if drift <= tol * scale:
                    logger.debug(f"Laurent quadrature at {mpmath.nstr(a, 8)} converged with {len(samples)} nodes")
                    return [+c for c in coeffs]
            if nodes * 2 > settings.quadrature_node_cap:
                raise NonConvergenceError(
                    f"Laurent quadrature at {mpmath.nstr(a, 8)} did not converge with {nodes} nodes",
                    partial=coeffs,
                )
            previous = coeffs
            nodes *= 2
            add_nodes(nodes, 1, 2)


def singular_part(z: ZeroInfo, t):
    """s_a(t) = sum_m b_{a,m} / (t - a)^m at the current precision"""
    return mpmath.fsum(b / (t - z.a) ** m for m, b in enumerate(z.b_coeffs, start=1))


def _g1_direct(gf: GeneratingFunction, zeros: List[ZeroInfo], t, prec: int):
    return _reciprocal_tg(gf, t, prec) - mpmath.fsum(singular_part(z, t) for z in zeros)


def eval_g1(gf: GeneratingFunction, rho: float, t, prec: int, zeros: Optional[List[ZeroInfo]] = None):
    """
    g1(t) = 1/(t g(t)) - sum of s_a(t) over zeros |a| < rho.

    The 1/t pole of 1/(t g(t)) stays in g1, so t = 0 is rejected. At a zero of g
    the removable singularity is evaluated by averaging four points around t.
    """
    check_precision(prec)
    with mpmath.workprec(prec):
        t = mpmath.mpmathify(t)
        step = mpmath.ldexp(1, -(prec // 4))
        if abs(t) < step:
            raise InvalidArgumentError("g1 keeps the 1/t pole of 1/(t g(t)); evaluate it at t != 0")
        if zeros is None:
            zeros = zeros_up_to(gf, rho, prec)
        near = [z for z in zeros if abs(t - z.a) < step / 2]
        if not near:
            return +_g1_direct(gf, zeros, t, prec)

    # cancellation near a pole of order beta costs beta*prec/4 bits
    wprec = prec + max(z.beta for z in near) * (prec // 4) + 32
    with mpmath.workprec(wprec):
        fine = zeros_up_to(gf, rho, wprec)
        values = [_g1_direct(gf, fine, t + step * mpmath.mpc(0, 1) ** k, wprec) for k in range(4)]
        mean = mpmath.fsum(values) / 4
    with mpmath.workprec(prec):
        return +mean
