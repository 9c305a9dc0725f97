"""
Quantitative checks of computed zeros against the predicted attractor:
Hausdorff distances, zero densities along arcs and segments, exact versus
asymptotic tables, and argument-principle count cross-checks.
"""
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff

from app.config import settings
from app.errors import InsufficientSampleError, InvalidArgumentError
from app.models.schemas import (
    AsymPoint,
    AsymRow,
    AsymptoticContext,
    AttractorGeometry,
    BigPoly,
    CheckResult,
    CountCheck,
    DensityBin,
    DensityHistogram,
    GeneratingFunction,
    PieceKind,
    Rectangle,
    RootSet,
    RunConfig,
    ValidationReport,
    ZeroInfo,
)
from app.services.appell import (
    appell_poly,
    asym_normalized,
    exact_normalized,
    rounding_error_bits,
    scaled_poly,
)
from app.services.attractor import (
    bisector,
    curve_curve_intersections,
    default_deltas,
    line_intersection,
    predicted_log_rate,
)
from app.services.rootfind import aberth, argument_principle_count, default_precision

logger = logging.getLogger(__name__)

MIN_PER_BIN = 8


def _as_points(values: Sequence[complex]) -> np.ndarray:
    z = np.asarray(list(values), dtype=np.complex128)
    return np.column_stack([z.real, z.imag])


def directed_distances(A: Sequence[complex], B: Sequence[complex]) -> Tuple[float, float]:
    """(sup_a d(a, B), sup_b d(b, A))"""
    if len(A) == 0 or len(B) == 0:
        raise InvalidArgumentError("Hausdorff distance needs two nonempty point sets")
    pa, pb = _as_points(A), _as_points(B)
    return directed_hausdorff(pa, pb, seed=0)[0], directed_hausdorff(pb, pa, seed=0)[0]


def hausdorff(A: Sequence[complex], B: Sequence[complex]) -> float:
    return max(directed_distances(A, B))


class PieceIndex:
    """Nearest attractor piece for each query point"""

    def __init__(self, geometry: AttractorGeometry):
        self.points = np.array(geometry.points(), dtype=np.complex128)
        self.tree = cKDTree(_as_points(self.points))
        self.tags = []
        for arc in geometry.arcs:
            self.tags += [(PieceKind.arc, arc.owner.label(), None)] * len(arc.points)
        for seg in geometry.segments:
            self.tags += [(PieceKind.segment, seg.owners[0].label(), seg.owners[1].label())] * len(seg.points)

    def nearest(self, zeros: Sequence[complex]) -> Tuple[np.ndarray, np.ndarray]:
        return self.tree.query(_as_points(zeros))


def _shift_angles(angles: np.ndarray, reference: np.ndarray) -> Tuple[np.ndarray, float]:
    """Measure angles from the middle of the widest gap of reference (mod 2 pi)"""
    ref = np.sort(np.mod(reference, 2 * np.pi))
    gaps = np.diff(np.concatenate([ref, [ref[0] + 2 * np.pi]]))
    k = int(np.argmax(gaps))
    cut = ref[k] + gaps[k] / 2.0
    return np.mod(angles - cut, 2 * np.pi), cut


def _histogram(label: str, kind: PieceKind, owners: List[str], coordinate: str,
               values: np.ndarray, intervals: List[Tuple[float, float]], bins: int) -> DensityHistogram:
    """Bin values over the union of intervals; expected counts follow interval coverage"""
    selected = len(values)
    if selected < MIN_PER_BIN * bins:
        raise InsufficientSampleError(
            f"{label}: {selected} zeros selected, need at least {MIN_PER_BIN * bins} for {bins} bins"
        )
    lo = min(i[0] for i in intervals)
    hi = max(i[1] for i in intervals)
    edges = np.linspace(lo, hi, bins + 1)
    clipped = np.clip(values, lo, hi)
    counts, _ = np.histogram(clipped, bins=edges)

    coverage = np.zeros(bins)
    for a, b in intervals:
        coverage += np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
    expected = selected * coverage / coverage.sum()

    rel = [abs(c - e) / e for c, e in zip(counts, expected) if e > 0]
    return DensityHistogram(
        label=label,
        kind=kind,
        owners=owners,
        coordinate=coordinate,
        bins=[DensityBin(lo=float(edges[k]), hi=float(edges[k + 1]), count=int(counts[k]), expected=float(expected[k]))
              for k in range(bins)],
        selected=selected,
        max_rel_dev=float(max(rel)),
    )


def zero_angles(zeros: Sequence[complex], a: ZeroInfo) -> np.ndarray:
    """arg phi(a x) for each zero x"""
    y = a.value * np.asarray(list(zeros), dtype=np.complex128)
    return np.angle(y) - y.imag


def _select(index: PieceIndex, zeros: Sequence[complex], window: float, kind: PieceKind,
            owners: Tuple[str, Optional[str]]) -> np.ndarray:
    z = np.asarray(list(zeros), dtype=np.complex128)
    if len(z) == 0:
        return z
    dist, idx = index.nearest(z)
    mask = np.zeros(len(z), dtype=bool)
    for k, (d, i) in enumerate(zip(dist, idx)):
        tag_kind, o1, o2 = index.tags[i]
        if d <= window and tag_kind == kind and {o1, o2} == set(owners):
            mask[k] = True
    return z[mask]


def density_arc_report(zeros: Sequence[complex], a: ZeroInfo, geometry: AttractorGeometry, window: float,
                       bins: int) -> DensityHistogram:
    """Histogram of arg phi(a x) over zeros near the arcs owned by a"""
    if bins < 4:
        raise InvalidArgumentError(f"need at least 4 bins, got {bins}")
    arcs = [arc for arc in geometry.arcs if arc.owner.label() == a.label()]
    if not arcs:
        raise InvalidArgumentError(f"the attractor has no arc owned by {a.label()}")
    index = PieceIndex(geometry)
    picked = _select(index, zeros, window, PieceKind.arc, (a.label(), None))

    reference = np.concatenate([zero_angles(arc.points, a) for arc in arcs])
    _, cut = _shift_angles(reference, reference)
    intervals = []
    for arc in arcs:
        shifted = np.mod(zero_angles(arc.points, a) - cut, 2 * np.pi)
        intervals.append((float(shifted.min()), float(shifted.max())))
    values = np.mod(zero_angles(picked, a) - cut, 2 * np.pi)
    return _histogram(f"arc {a.label()}", PieceKind.arc, [a.label()], "arg_phi", values, intervals, bins)


def density_segment_report(zeros: Sequence[complex], pair: Tuple[ZeroInfo, ZeroInfo], geometry: AttractorGeometry,
                           window: float, bins: int, coordinate: str = "position") -> DensityHistogram:
    """Histogram of position (or arg psi, affine in position) over zeros near the segments of a pair"""
    if bins < 4:
        raise InvalidArgumentError(f"need at least 4 bins, got {bins}")
    a, b = pair
    labels = {a.label(), b.label()}
    segments = [s for s in geometry.segments if {s.owners[0].label(), s.owners[1].label()} == labels]
    if not segments:
        raise InsufficientSampleError(f"the attractor has no segment between {a.label()} and {b.label()}")
    index = PieceIndex(geometry)
    picked = _select(index, zeros, window, PieceKind.segment, (segments[0].owners[0].label(),
                                                                 segments[0].owners[1].label()))

    start = segments[0].endpoints[0]
    direction = segments[0].endpoints[1] - start
    direction /= abs(direction)

    def coord(points) -> np.ndarray:
        x = np.asarray(list(points), dtype=np.complex128)
        if coordinate == "arg_psi":
            # arg psi(x) = arg(a/b) + Im((b - a) x), unwrapped
            return np.angle(a.value / b.value) + ((b.value - a.value) * x).imag
        return ((x - start) * np.conj(direction)).real

    if coordinate not in ("position", "arg_psi"):
        raise InvalidArgumentError(f"unknown segment coordinate {coordinate!r}")
    intervals = []
    for seg in segments:
        ends = coord(seg.endpoints)
        intervals.append((float(ends.min()), float(ends.max())))
    return _histogram(f"segment {a.label()}|{b.label()}", PieceKind.segment, [a.label(), b.label()],
                      coordinate, coord(picked), intervals, bins)


def sector_count(angles: Sequence[float], gamma1: float, gamma2: float, n: int) -> Tuple[int, float]:
    """Number of angles in [gamma1, gamma2) modulo 2 pi, and that number over n"""
    width = gamma2 - gamma1
    values = np.asarray(angles, dtype=float)
    if width >= 2 * np.pi:
        count = len(values)
    elif width <= 0:
        count = 0
    else:
        count = int(np.count_nonzero(np.mod(values - gamma1, 2 * np.pi) < width))
    return count, count / n


def _check_sample_point(x: complex, ctx: AsymptoticContext, deltas: List[float],
                        geometry: Optional[AttractorGeometry], clearance: float) -> None:
    if x == 0:
        raise InvalidArgumentError("sample point x = 0 is excluded")
    for z, d in zip(ctx.zeros, deltas):
        if abs(x - 1.0 / z.value) <= d:
            raise InvalidArgumentError(f"sample point {x} lies within {d:.3g} of 1/a for a = {z.label()}")
    if geometry is not None and geometry.all_points:
        dist = np.min(np.abs(np.array(geometry.points()) - x))
        if dist < clearance:
            raise InvalidArgumentError(f"sample point {x} lies within {dist:.3g} of the attractor")


def asym_error_table(ctx: AsymptoticContext, n_list: Sequence[int], points: Sequence[AsymPoint],
                     geometry: Optional[AttractorGeometry] = None,
                     polys: Optional[Dict[int, BigPoly]] = None) -> List[AsymRow]:
    """Exact f_n(x) against its asymptotic main term over n, with empirical convergence orders"""
    deltas = default_deltas(ctx.zeros)
    for point in points:
        _check_sample_point(point.x, ctx, deltas, geometry, settings.attractor_clearance)
    polys = dict(polys or {})
    proper = [z for z in ctx.dominants if z.is_proper]

    rows = []
    for point in points:
        x = point.x
        limit = predicted_log_rate(x, proper)
        previous = None
        for n in sorted(n_list):
            prec = default_precision(n)
            if n not in polys:
                polys[n] = scaled_poly(appell_poly(ctx.gf, n, prec), n)
            exact = complex(exact_normalized(ctx.gf, n, x, prec, polys[n]))
            approx = complex(asym_normalized(ctx, n, x, point.mode))
            abs_err = abs(exact - approx)
            rel_err = abs_err / abs(approx) if approx != 0 else float("inf")

            order = ratio = None
            if previous is not None and previous[1] > 0 and abs_err > 0:
                ratio = previous[1] / abs_err
                order = math.log(ratio) / math.log(n / previous[0])
            previous = (n, abs_err)

            rows.append(AsymRow(
                x_re=x.real, x_im=x.imag, n=n, mode=point.mode.value,
                exact_re=exact.real, exact_im=exact.imag,
                approx_re=approx.real, approx_im=approx.imag,
                abs_err=abs_err, rel_err=rel_err, order=order, ratio=ratio,
                log_rate=math.log(abs(exact)) / n if exact != 0 else float("-inf"),
                log_rate_limit=limit,
                error_bound_bits=rounding_error_bits(n, prec),
            ))
    logger.info(f"Asymptotic table: {len(points)} points x {len(n_list)} degrees")
    return rows


def _median_spacing(z: np.ndarray) -> float:
    if len(z) < 2:
        return 1.0
    dist, _ = cKDTree(_as_points(z)).query(_as_points(z), k=2)
    return float(np.median(dist[:, 1]))


def _random_side(rng: np.random.Generator, lo: float, hi: float, clear) -> Optional[float]:
    for _ in range(200):
        value = rng.uniform(lo, hi)
        if clear(value):
            return value
    return None


def random_rectangles(zeros: Sequence[complex], count: int, seed: int) -> List[Rectangle]:
    """Seeded rectangles inside the zeros' bounding box whose edges stay clear of every zero"""
    z = np.asarray(list(zeros), dtype=np.complex128)
    clearance = min(settings.attractor_clearance, 0.25 * _median_spacing(z))
    pad = 0.1 * max(np.ptp(z.real), np.ptp(z.imag), 1e-3)
    re_lo, re_hi = z.real.min() - pad, z.real.max() + pad
    im_lo, im_hi = z.imag.min() - pad, z.imag.max() + pad
    rng = np.random.default_rng(seed)

    rects = []
    attempts = 0
    while len(rects) < count and attempts < 50 * max(count, 1):
        attempts += 1
        # horizontal edges span the box; vertical edges only the chosen height
        def clear_h(y):
            return np.all(np.abs(z.imag - y) >= clearance)

        y0 = _random_side(rng, im_lo, im_hi, clear_h)
        y1 = _random_side(rng, im_lo, im_hi, clear_h)
        if y0 is None or y1 is None or abs(y1 - y0) < 4 * clearance:
            continue
        y0, y1 = sorted((y0, y1))
        band = z[(z.imag > y0 - clearance) & (z.imag < y1 + clearance)]

        def clear_v(x):
            return np.all(np.abs(band.real - x) >= clearance)

        x0 = _random_side(rng, re_lo, re_hi, clear_v)
        x1 = _random_side(rng, re_lo, re_hi, clear_v)
        if x0 is None or x1 is None or abs(x1 - x0) < 4 * clearance:
            continue
        x0, x1 = sorted((x0, x1))
        rects.append(Rectangle(re_min=float(x0), re_max=float(x1), im_min=float(y0), im_max=float(y1)))
    return rects


def count_crosscheck(poly: BigPoly, roots: RootSet, n_rects: int, seed: int) -> List[CountCheck]:
    """Argument-principle counts against Aberth counts on seeded random rectangles"""
    found = roots.as_complex()
    checks = []
    for rect in random_rectangles(found, n_rects, seed):
        expected = sum(1 for z in found if rect.contains(z))
        counted = argument_principle_count(poly, rect)
        checks.append(CountCheck(rectangle=rect, counted=counted, expected=expected))
        if counted != expected:
            logger.warning(f"Count mismatch on {rect}: contour {counted}, Aberth {expected}")
    logger.info(f"Count cross-check: {sum(c.agrees for c in checks)}/{len(checks)} rectangles agree")
    return checks


def _solve_one(gf: GeneratingFunction, n: int, prec: int) -> RootSet:
    return aberth(scaled_poly(appell_poly(gf, n, prec), n), prec)


def solve_degrees(gf: GeneratingFunction, degrees: Sequence[int],
                  precisions: Optional[Dict[int, int]] = None) -> Dict[int, RootSet]:
    """Root sets of p_n(nx) for several n, one worker process per degree up to APPELL_THREADS"""
    precisions = precisions or {}
    jobs = {n: precisions.get(n) or default_precision(n) for n in degrees}
    if settings.threads <= 1 or len(jobs) <= 1:
        return {n: _solve_one(gf, n, prec) for n, prec in jobs.items()}
    with ProcessPoolExecutor(max_workers=min(settings.threads, len(jobs))) as pool:
        futures = {n: pool.submit(_solve_one, gf, n, prec) for n, prec in jobs.items()}
        return {n: future.result() for n, future in futures.items()}


def outliers(zeros: Sequence[complex], geometry: AttractorGeometry, window: float) -> List[Tuple[float, float]]:
    """Zeros farther than window from every attractor point"""
    dist, _ = PieceIndex(geometry).nearest(zeros)
    return [(z.real, z.imag) for z, d in zip(zeros, dist) if d > window]


def _density_reports(zeros: List[complex], ctx: AsymptoticContext, geometry: AttractorGeometry, window: float,
                     config: RunConfig) -> Tuple[List[DensityHistogram], List[CheckResult]]:
    reports, checks = [], []
    opts, tols = config.validation, config.tolerances
    owners = {arc.owner.label(): arc.owner for arc in geometry.arcs}
    pairs = {}
    for seg in geometry.segments:
        pairs.setdefault(tuple(sorted((seg.owners[0].label(), seg.owners[1].label()))), seg.owners)

    jobs = [("arc", owner, tols.arc_bin_threshold) for owner in owners.values()]
    jobs += [("segment", pair, tols.segment_bin_threshold) for pair in pairs.values()]
    for kind, target, threshold in jobs:
        try:
            if kind == "arc":
                report = density_arc_report(zeros, target, geometry, window, opts.arc_bins)
            else:
                report = density_segment_report(zeros, target, geometry, window, opts.segment_bins)
        except InsufficientSampleError as e:
            logger.warning(f"Density check skipped: {e.detail}")
            checks.append(CheckResult(name=f"density {kind}", passed=False, skipped=True, note=e.detail))
            continue
        reports.append(report)
        checks.append(CheckResult(
            name=f"density {report.label}",
            value=report.max_rel_dev,
            threshold=f"<= {threshold}",
            passed=report.max_rel_dev <= threshold,
        ))
    return reports, checks


def _geometry_checks(ctx: AsymptoticContext) -> List[CheckResult]:
    proper = [z for z in ctx.dominants if z.is_proper]
    most = 0
    for a, b in itertools.combinations(proper, 2):
        most = max(most, len(curve_curve_intersections(a, b)))
    checks = [CheckResult(name="curve intersections per pair", value=most, threshold="<= 2", passed=most <= 2)]

    worst = 0.0
    for a, b, c in itertools.combinations(proper, 3):
        ab, bc, ac = bisector(a, b), bisector(b, c), bisector(a, c)
        p, q = line_intersection(ab, bc), line_intersection(ab, ac)
        if p is not None and q is not None:
            worst = max(worst, abs(p - q))
    if len(proper) >= 3:
        checks.append(CheckResult(name="bisector concurrency", value=worst, threshold="<= 1e-12",
                                  passed=worst <= 1e-12))
    return checks


def build_report(config: RunConfig, ctx: AsymptoticContext, poly: BigPoly, roots: RootSet,
                 geometry: AttractorGeometry, compare: Optional[RootSet] = None) -> ValidationReport:
    """Every configured check of the computed zeros against the predicted attractor"""
    n = poly.degree
    tols, opts = config.tolerances, config.validation
    zeros = roots.as_complex()
    window = settings.window_factor / n
    attractor = geometry.points()

    to_attractor, from_attractor = directed_distances(zeros, attractor)
    distance = max(to_attractor, from_attractor)
    checks = []
    if tols.hausdorff_max is not None:
        checks.append(CheckResult(name="hausdorff", value=distance, threshold=f"<= {tols.hausdorff_max}",
                                  passed=distance <= tols.hausdorff_max))

    limit = 1.0 / ctx.r0 + tols.containment_margin
    largest = max(abs(z) for z in zeros)
    checks.append(CheckResult(name="containment", value=largest, threshold=f"<= {limit:.6g}", passed=largest <= limit))

    density, density_checks = _density_reports(zeros, ctx, geometry, window, config)
    checks += density_checks

    table = []
    if opts.asym_points:
        n_list = opts.n_list or [max(1, n // 2), n]
        table = asym_error_table(ctx, n_list, opts.asym_points, geometry, polys={n: poly})
        for row in table:
            if row.mode == "exterior" and row.ratio is not None:
                ok = tols.exterior_ratio_min <= row.ratio <= tols.exterior_ratio_max
                checks.append(CheckResult(
                    name=f"exterior order at x={complex(row.x_re, row.x_im)}, n={row.n}",
                    value=row.ratio,
                    threshold=f"in [{tols.exterior_ratio_min}, {tols.exterior_ratio_max}]",
                    passed=ok,
                ))

    checks += _geometry_checks(ctx)

    counts = []
    if opts.count_rectangles:
        counts = count_crosscheck(poly, roots, opts.count_rectangles, config.seed)
        agree = sum(c.agrees for c in counts)
        checks.append(CheckResult(name="count cross-check", value=agree,
                                  threshold=f"== {len(counts)}", passed=agree == len(counts)))

    if compare is not None:
        other = compare.as_complex()
        coarse = hausdorff(other, attractor)
        checks.append(CheckResult(name=f"hausdorff decreases from n={len(other)}", value=distance,
                                  threshold=f"< {coarse:.6g}", passed=distance < coarse))
        other_density, _ = _density_reports(other, ctx, geometry, settings.window_factor / len(other), config)
        previous = {r.label: r.max_rel_dev for r in other_density}
        for report in density:
            if report.label in previous:
                checks.append(CheckResult(
                    name=f"density improves for {report.label}", value=report.max_rel_dev,
                    threshold=f"< {previous[report.label]:.6g}", passed=report.max_rel_dev < previous[report.label],
                ))
            else:
                checks.append(CheckResult(
                    name=f"density improves for {report.label}", passed=False, skipped=True,
                    note=f"too few zeros at n={len(other)}",
                ))

    stray = outliers(zeros, geometry, window)
    if stray:
        logger.info(f"{len(stray)} zeros lie farther than {window:.3g} from every attractor piece")

    report = ValidationReport(
        degree=n,
        hausdorff=distance,
        directed_zeros_to_attractor=to_attractor,
        directed_attractor_to_zeros=from_attractor,
        density=density,
        density_max_rel_dev=max((d.max_rel_dev for d in density), default=None),
        asym_table=table,
        count_checks=counts,
        outliers=stray,
        checks=checks,
        passed=all(c.passed for c in checks if not c.skipped),
    )
    logger.info(f"Validation at n={n}: hausdorff={distance:.4g}, "
                f"{sum(c.passed for c in checks)}/{sum(not c.skipped for c in checks)} checks passed, "
                f"{sum(c.skipped for c in checks)} skipped")
    return report
