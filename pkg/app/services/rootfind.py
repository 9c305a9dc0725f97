"""
Multiprecision simultaneous root finding (Aberth-Ehrlich) and an independent
argument-principle root counter over rectangles.
"""
import logging
import math
from typing import List, Optional, Tuple

import mpmath
import numpy as np

from app.config import settings
from app.errors import InvalidArgumentError, NonConvergenceError, PrecisionError
from app.models.schemas import BigPoly, Rectangle, RootCluster, RootSet

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))
PHASE_OFFSET = 0.7


def default_precision(n: int) -> int:
    """Working bits for degree n: p_n(nx) spans about 2^{1.443 n} in coefficient size"""
    return max(256, math.ceil(2 * n) + 128)


def _horner(coeffs, abs_coeffs, x, unit) -> Tuple:
    value = coeffs[-1]
    deriv = mpmath.mpf(0)
    mu = abs_coeffs[-1]
    ax = abs(x)
    for k in range(len(coeffs) - 2, -1, -1):
        deriv = deriv * x + value
        value = value * x + coeffs[k]
        mu = mu * ax + abs_coeffs[k]
    # complex Horner: gamma_{2n} with a factor 2 for the complex products
    return value, deriv, 4 * len(coeffs) * unit * mu


def horner_eval(p: BigPoly, x) -> Tuple:
    """(p(x), p'(x), rounding error bound on p(x)) at the polynomial's precision"""
    with mpmath.workprec(p.prec):
        x = mpmath.mpmathify(x)
        return _horner(p.coeffs, [abs(c) for c in p.coeffs], x, mpmath.ldexp(1, 1 - p.prec))


def _upper_hull(points: List[Tuple[int, float]]) -> List[Tuple[int, float]]:
    hull = []
    for pt in points:
        while len(hull) >= 2:
            (x0, y0), (x1, y1) = hull[-2], hull[-1]
            if (x1 - x0) * (pt[1] - y0) - (y1 - y0) * (pt[0] - x0) >= 0:
                hull.pop()
            else:
                break
        hull.append(pt)
    return hull


def _annuli(hull: List[Tuple[int, float]], ratio: float) -> List[Tuple[Tuple[int, float], Tuple[int, float]]]:
    """
    Merge consecutive Newton-polygon edges into annuli whose edge radii span at most a factor ratio.
    Each annulus is the chord between its first and last hull vertex.
    """
    spread = math.log(ratio)
    annuli = []
    start = 0
    while start < len(hull) - 1:
        (i0, l0), (i1, l1) = hull[start], hull[start + 1]
        low = high = (l0 - l1) / (i1 - i0)
        end = start + 1
        while end < len(hull) - 1:
            (i, li), (j, lj) = hull[end], hull[end + 1]
            slope = (li - lj) / (j - i)
            if max(high, slope) - min(low, slope) > spread:
                break
            low, high = min(low, slope), max(high, slope)
            end += 1
        annuli.append((hull[start], hull[end]))
        start = end
    return annuli


def initial_guesses(coeffs, ratio: Optional[float] = None) -> List:
    """
    Points on the circles |c_i/c_j|^{1/(j-i)} of the Newton polygon with golden-angle phase shifts.
    Edges whose radii lie within a factor ratio share one circle.
    """
    ratio = ratio or settings.newton_annulus_ratio
    points = [(k, float(mpmath.log(abs(c)))) for k, c in enumerate(coeffs) if c != 0]
    hull = _upper_hull(points)
    guesses = []
    for circle, ((i, li), (j, lj)) in enumerate(_annuli(hull, ratio)):
        count = j - i
        radius = mpmath.exp(mpmath.mpf(li - lj) / count)
        offset = PHASE_OFFSET + circle * GOLDEN_ANGLE
        for m in range(count):
            guesses.append(radius * mpmath.expj(offset + 2 * math.pi * m / count))
    return guesses


def _aberth_sums(roots: List, active: List[int]) -> List:
    """sum_{j != i} 1/(z_i - z_j) for the active i; double precision when the roots are well separated"""
    z = np.array([complex(r) for r in roots], dtype=np.complex128)
    if np.all(np.isfinite(z)) and len(z) > 1:
        diff = z[active, None] - z[None, :]
        scale = np.maximum(np.abs(z[active, None]), np.abs(z[None, :]))
        for row, i in enumerate(active):
            diff[row, i] = np.inf
        if np.all(np.abs(diff) > 1e-10 * np.maximum(scale, 1e-300)):
            sums = (1.0 / diff).sum(axis=1)
            if np.all(np.isfinite(sums)):
                return [mpmath.mpc(s) for s in sums]

    sums = []
    for i in active:
        zi = roots[i]
        sums.append(mpmath.fsum(1 / (zi - zj) for j, zj in enumerate(roots) if j != i and zj != zi))
    return sums


def _find_clusters(roots: List, radius) -> List[RootCluster]:
    """Groups of roots closer than radius (relative), screened in double and confirmed in mp"""
    n = len(roots)
    z = np.array([complex(r) for r in roots], dtype=np.complex128)
    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    coarse = max(float(radius), 1e-12)
    for i in range(n):
        near = np.nonzero(np.abs(z[i + 1:] - z[i]) <= coarse * max(1.0, abs(z[i])))[0]
        for offset in near:
            j = i + 1 + int(offset)
            if abs(roots[i] - roots[j]) < radius * max(1, abs(roots[i])):
                parent[find(j)] = find(i)

    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = []
    for members in groups.values():
        if len(members) > 1:
            center = mpmath.fsum(roots[i] for i in members) / len(members)
            clusters.append(RootCluster(center=center, members=members))
    return clusters


def aberth(p: BigPoly, prec: Optional[int] = None, tol=None, max_iter: Optional[int] = None) -> RootSet:
    """All roots of p by Aberth-Ehrlich iteration with Jacobi-style sweeps"""
    if p.degree < 1:
        raise InvalidArgumentError(f"root finding needs degree >= 1, got {p.degree}")
    prec = prec or p.prec
    max_iter = max_iter or settings.aberth_max_iter

    with mpmath.workprec(prec):
        tol = mpmath.mpf(tol) if tol is not None else mpmath.ldexp(1, -(prec // 2))
        unit = mpmath.ldexp(1, 1 - prec)
        lead = p.coeffs[-1]
        coeffs = [c / lead for c in p.coeffs]

        # exact zero roots
        shift = 0
        while coeffs[shift] == 0:
            shift += 1
        zero_roots = [mpmath.mpc(0)] * shift
        work = coeffs[shift:]
        abs_work = [abs(c) for c in work]

        roots = initial_guesses(work)
        active = list(range(len(roots)))
        iterations = 0
        while active and iterations < max_iter:
            iterations += 1
            sums = _aberth_sums(roots, active)
            updates = []
            for i, s in zip(active, sums):
                value, deriv, bound = _horner(work, abs_work, roots[i], unit)
                if abs(value) <= bound:
                    updates.append((i, mpmath.mpc(0), True))
                    continue
                denom = deriv - value * s
                if denom == 0:
                    nudge = abs(roots[i]) * mpmath.ldexp(1, -(prec // 8)) * mpmath.expj(GOLDEN_ANGLE)
                    updates.append((i, -nudge, False))
                    continue
                w = value / denom
                updates.append((i, w, abs(w) <= tol * abs(roots[i])))

            still = []
            for i, w, done in updates:
                roots[i] -= w
                if not done:
                    still.append(i)
            active = still
            if iterations % 10 == 0:
                logger.debug(f"Aberth sweep {iterations}: {len(active)} of {len(roots)} roots still moving")

        roots = zero_roots + roots
        norm = max(abs(c) for c in coeffs)
        abs_coeffs = [abs(c) for c in coeffs]
        residuals = tuple(float(abs(_horner(coeffs, abs_coeffs, r, unit)[0]) / norm) for r in roots)
        residual_bound = max(residuals)
        clusters = _find_clusters(roots, mpmath.sqrt(tol))
        result = RootSet(
            roots=tuple(roots),
            residual_bound=residual_bound,
            iterations=iterations,
            prec=prec,
            residuals=residuals,
            converged=not active,
            clusters=clusters,
        )

        threshold = float(mpmath.ldexp(1, -(prec // 4)))
        if active:
            if residual_bound > threshold:
                raise NonConvergenceError(
                    f"Aberth iteration left {len(active)} of {p.degree} roots unconverged after {iterations} sweeps "
                    f"(residual {residual_bound:.3e} > {threshold:.3e})",
                    partial=result,
                )
            logger.warning(f"Aberth hit max_iter={max_iter} with {len(active)} roots moving; residuals certify them")

    logger.info(f"Found {p.degree} roots at {prec} bits in {iterations} sweeps, "
                f"max residual {residual_bound:.3e}, {len(clusters)} clusters")
    return result


def _edge_points(rect: Rectangle) -> List[Tuple]:
    corners = [
        complex(rect.re_min, rect.im_min),
        complex(rect.re_max, rect.im_min),
        complex(rect.re_max, rect.im_max),
        complex(rect.re_min, rect.im_max),
    ]
    return [(corners[k], corners[(k + 1) % 4]) for k in range(4)]


def argument_principle_count(p: BigPoly, rect: Rectangle, base_nodes: Optional[int] = None,
                             prec: Optional[int] = None) -> int:
    """Number of roots of p inside rect: (1/2 pi i) of the contour integral of p'/p, trapezoid rule per edge"""
    base_nodes = base_nodes or settings.contour_base_nodes
    prec = prec or p.prec
    cap = settings.contour_node_cap

    with mpmath.workprec(prec):
        unit = mpmath.ldexp(1, 1 - prec)
        guard = mpmath.ldexp(1, prec // 4)
        abs_coeffs = [abs(c) for c in p.coeffs]

        def log_derivative(z):
            value, deriv, bound = _horner(p.coeffs, abs_coeffs, z, unit)
            if abs(value) < guard * bound:
                raise PrecisionError(
                    f"contour passes too close to a root of p near {mpmath.nstr(z, 10)}: "
                    f"|p| = {mpmath.nstr(abs(value), 5)} is within rounding"
                )
            return deriv / value

        edges = []
        for start, end in _edge_points(rect):
            a, b = mpmath.mpc(start), mpmath.mpc(end)
            edges.append((a, b, [log_derivative(a + (b - a) * k / base_nodes) for k in range(base_nodes + 1)]))

        nodes = base_nodes
        previous = None
        while True:
            total = mpmath.mpf(0)
            for a, b, values in edges:
                h = (b - a) / nodes
                total += h * (mpmath.fsum(values[1:-1]) + (values[0] + values[-1]) / 2)
            count = total / (2j * mpmath.pi)
            nearest = int(mpmath.nint(mpmath.re(count)))
            close = abs(count - nearest) < settings.contour_snap_tol
            if close and previous == nearest:
                logger.debug(f"Argument principle: {nearest} roots with {4 * nodes} contour nodes")
                return nearest
            previous = nearest if close else None

            if 2 * nodes * 4 > cap:
                raise NonConvergenceError(
                    f"argument-principle count did not settle with {4 * nodes} contour nodes "
                    f"(last value {mpmath.nstr(count, 8)})",
                    partial=count,
                )
            nodes *= 2
            refined = []
            for a, b, values in edges:
                merged = []
                for k, v in enumerate(values[:-1]):
                    merged.append(v)
                    merged.append(log_derivative(a + (b - a) * (2 * k + 1) / nodes))
                merged.append(values[-1])
                refined.append((a, b, merged))
            edges = refined
