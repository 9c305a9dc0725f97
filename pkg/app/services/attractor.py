"""
Szego-curve geometry: dominance of the zeros of g, bisector lines, the regions
D_0 and D_a, and the predicted zero attractor as the union of their boundaries.

Geometry runs in double precision on numpy arrays; the defining map is
phi(y) = y e^{1-y}, and |phi(y)| = 1 with Re y <= 1 is the standard curve.
"""
import logging
import math
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize

from app.config import settings
from app.errors import InvalidArgumentError
from app.models.schemas import (
    AsymptoticContext,
    AttractorArc,
    AttractorGeometry,
    AttractorPoint,
    AttractorSegment,
    BisectorLine,
    Dominance,
    GeneratingFunction,
    PieceKind,
    Rectangle,
    Region,
    RegionKind,
    SzegoCurve,
    ZeroInfo,
)
from app.services.genfun import zeros_up_to

logger = logging.getLogger(__name__)

ZeroLike = Union[ZeroInfo, complex]

# length of the standard curve, used to pace segment sampling like the arcs
STANDARD_CURVE_LENGTH = 4.4


def _c(z: ZeroLike) -> complex:
    return z.value if isinstance(z, ZeroInfo) else complex(z)


def log_phi_abs(y):
    """ln|phi(y)| = ln|y| + 1 - Re y, elementwise"""
    y = np.asarray(y, dtype=np.complex128)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(y)) + 1.0 - y.real


def phi_abs(y):
    return np.exp(log_phi_abs(y))


@lru_cache(maxsize=1)
def lambert_w_inv_e() -> float:
    """W(e^-1), the principal solution of w e^w = e^-1, by Newton"""
    target = math.exp(-1.0)
    w = 0.3
    for _ in range(50):
        ew = math.exp(w)
        step = (w * ew - target) / (ew * (w + 1.0))
        w -= step
        if abs(step) < 1e-17:
            break
    return w


def dominance_radius(r0: float) -> float:
    """Zeros with modulus beyond r0 / W(e^-1) can never be dominant"""
    return r0 / lambert_w_inv_e()


def _standard_curve(npts: int) -> np.ndarray:
    """Closed loop of the standard curve from 1 through -W(e^-1) and back, refined where chords are long"""
    w = lambert_w_inv_e()
    half = max(npts // 2, 8)
    s = np.linspace(1.0, -w, half + 1)

    def height(s_values):
        # e^{2(s-1)} - s^2 = (e^{s-1} - s)(e^{s-1} + s), first factor without cancellation
        u = s_values - 1.0
        radicand = (np.expm1(u) - u) * (np.exp(u) + s_values)
        return np.sqrt(np.clip(radicand, 0.0, None))

    # the sqrt end at s = -W has a vertical tangent: bisect long chords in s
    for _ in range(40):
        pts = s + 1j * height(s)
        chords = np.abs(np.diff(pts))
        limit = 2.0 * chords.mean()
        long = np.nonzero(chords > limit)[0]
        if len(long) == 0:
            break
        s = np.sort(np.concatenate([s, (s[long] + s[long + 1]) / 2.0]))[::-1]

    upper = s + 1j * height(s)
    upper[0] = 1.0
    upper[-1] = -w
    lower = np.conj(upper[::-1])[1:]
    return np.concatenate([upper, lower])


def szego_samples(a: ZeroLike, npts: int) -> SzegoCurve:
    """The curve (1/a) S as a closed polyline starting and ending at 1/a"""
    value = _c(a)
    if value == 0:
        raise InvalidArgumentError("the Szego curve (1/a) S needs a != 0")
    if npts < 16:
        raise InvalidArgumentError(f"need at least 16 samples, got {npts}")
    points = _standard_curve(npts) / value
    return SzegoCurve(owner=a, samples=points.tolist())


def inside_szego(b: ZeroLike, x: complex) -> bool:
    """x lies in the interior of (1/b) S: |phi(bx)| < 1 on the bounded side Re(bx) < 1"""
    y = _c(b) * complex(x)
    if y == 0:
        return True
    return bool(log_phi_abs(y) < 0.0 and y.real < 1.0)


def classify_dominance(zeros: List[ZeroInfo], tol_improper: Optional[float] = None) -> List[ZeroInfo]:
    """Mark each zero minimal, proper-/improper-dominant or non-dominant"""
    if not zeros:
        raise InvalidArgumentError("classify_dominance needs at least one zero")
    tol = tol_improper if tol_improper is not None else settings.improper_tol
    minimal = [z for z in zeros if z.modulus_class == 0]
    if not minimal:
        raise InvalidArgumentError("no zero in the minimal modulus class")
    r0 = min(abs(z.value) for z in minimal)
    cutoff = dominance_radius(r0)

    classified = []
    for z in zeros:
        if z.modulus_class == 0:
            label = Dominance.minimal
        elif abs(z.value) > cutoff:
            label = Dominance.non_dominant
        else:
            label = Dominance.proper_dominant
            inv = 1.0 / z.value
            for b in minimal:
                y = b.value * inv
                if abs(float(phi_abs(y)) - 1.0) < tol and y.real < 1.0:
                    label = Dominance.improper_dominant
                elif inside_szego(b, inv):
                    label = Dominance.non_dominant
                    break
        if label == Dominance.improper_dominant:
            logger.warning(f"Zero {z.label()} is an improper dominant zero: 1/a lies on a minimal Szego curve")
        classified.append(z.model_copy(update={"dominance": label}))

    count = sum(1 for z in classified if z.is_dominant)
    logger.info(f"Classified {len(zeros)} zeros: {count} dominant, radius bound {cutoff:.6g}")
    return classified


def bisector(a: ZeroInfo, b: ZeroInfo) -> BisectorLine:
    """The line |phi(ax)| = |phi(bx)|: Re((b - a) x) = ln|b/a|"""
    if a.value == b.value:
        raise InvalidArgumentError(f"bisector needs two distinct zeros, got {a.label()} twice")
    diff = b.value - a.value
    return BisectorLine(a=a, b=b, alpha=diff.real, beta=diff.imag, c=math.log(abs(b.value) / abs(a.value)))


def dominates(a: ZeroLike, b: ZeroLike, x: complex) -> bool:
    """x is in the closed half-plane |phi(ax)| <= |phi(bx)| containing 1/a"""
    av, bv = _c(a), _c(b)
    return ((bv - av) * complex(x)).real <= math.log(abs(bv) / abs(av))


def line_intersection(first: BisectorLine, second: BisectorLine) -> Optional[complex]:
    det = -first.alpha * second.beta + first.beta * second.alpha
    if abs(det) < 1e-14 * (abs(first.normal) * abs(second.normal)):
        return None
    s = (-first.c * second.beta + first.beta * second.c) / det
    t = (first.alpha * second.c - first.c * second.alpha) / det
    return complex(s, t)


def curve_curve_intersections(a: ZeroInfo, b: ZeroInfo, tol: Optional[float] = None) -> List[complex]:
    """Points of (1/a) S on the bisector of a and b, hence also on (1/b) S"""
    tol = tol if tol is not None else settings.tie_tol
    line = bisector(a, b)
    av, bv = a.value, b.value
    radius = 1.0 / abs(av)
    foot = line.foot()
    if abs(foot) > radius:
        return []
    half = math.sqrt(radius ** 2 - abs(foot) ** 2)
    direction = line.direction()

    def level(tau: float) -> float:
        return float(log_phi_abs(av * (foot + tau * direction)))

    taus = np.linspace(-half, half, settings.bracket_samples)
    values = log_phi_abs(av * (foot + taus * direction))
    points = []
    for k in np.nonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)[0]:
        tau = optimize.bisect(level, taus[k], taus[k + 1], xtol=1e-15, rtol=1e-15)
        x = foot + tau * direction
        if (av * x).real <= 1.0 + tol and (bv * x).real <= 1.0 + tol \
                and abs(phi_abs(av * x) - 1.0) <= tol and abs(phi_abs(bv * x) - 1.0) <= tol:
            points.append(complex(x))
    if len(points) > 2:
        logger.warning(f"Bisector of {a.label()} and {b.label()} meets the curve {len(points)} times")
    return points


def Phi(x: complex, dominants: Sequence[ZeroLike]) -> float:
    """max over dominant a of 1/|phi(ax)|"""
    if complex(x) == 0:
        raise InvalidArgumentError("Phi is undefined at x = 0")
    if not dominants:
        raise InvalidArgumentError("Phi needs at least one dominant zero")
    values = np.array([_c(a) for a in dominants]) * complex(x)
    return float(np.exp(-log_phi_abs(values).min()))


def region_of(x: complex, dominants: Sequence[ZeroInfo], tol: Optional[float] = None) -> Region:
    """Which piece of the D_0 / D_a decomposition contains x"""
    tol = tol if tol is not None else settings.tie_tol
    x = complex(x)
    if x == 0:
        raise InvalidArgumentError("region_of is undefined at x = 0")
    if not dominants:
        raise InvalidArgumentError("region_of needs at least one dominant zero")
    values = phi_abs(np.array([a.value for a in dominants]) * x)
    m = float(values.min())
    owners = [a for a, v in zip(dominants, values) if v <= m * (1.0 + tol)]

    if m > 1.0 + tol:
        return Region(kind=RegionKind.exterior)
    # the unbounded component of {|phi| < 1} lies where Re(ax) > 1
    if m < 1.0 - tol and (owners[0].value * x).real >= 1.0:
        return Region(kind=RegionKind.exterior)
    if len(owners) >= 2:
        return Region(kind=RegionKind.boundary_segment, owners=owners)
    if abs(m - 1.0) <= tol:
        return Region(kind=RegionKind.boundary_arc, owners=owners)
    return Region(kind=RegionKind.interior, owners=owners)


def default_deltas(zeros: Sequence[ZeroInfo]) -> List[float]:
    """Radii 0.05/|a| of the disks around 1/a, halved pairwise until the disks are disjoint"""
    deltas = [0.05 / abs(z.value) for z in zeros]
    centers = [1.0 / z.value for z in zeros]
    changed = True
    while changed:
        changed = False
        for i in range(len(zeros)):
            for j in range(i + 1, len(zeros)):
                if deltas[i] + deltas[j] >= abs(centers[i] - centers[j]):
                    deltas[i] /= 2.0
                    deltas[j] /= 2.0
                    changed = True
    return deltas


def in_R_rho(x: complex, dominants: Sequence[ZeroInfo], all_zeros: Sequence[ZeroInfo], rho: float,
             delta_map: Optional[Sequence[float]] = None) -> bool:
    """Membership in the region where the dominant-sum asymptotics hold"""
    x = complex(x)
    deltas = delta_map if delta_map is not None else default_deltas(all_zeros)
    minimal = [z for z in all_zeros if z.modulus_class == 0] or list(dominants)
    if any((z.value * x).real >= 1.0 for z in minimal):
        return False
    if any(abs(x - 1.0 / z.value) <= d for z, d in zip(all_zeros, deltas)):
        return False
    return abs(x) > 1.0 / rho


def _runs(mask: np.ndarray, closed: bool) -> List[np.ndarray]:
    """Index arrays of maximal True runs; on a closed loop a run may wrap around"""
    idx = np.nonzero(mask)[0]
    if len(idx) == 0:
        return []
    breaks = np.nonzero(np.diff(idx) > 1)[0]
    runs = np.split(idx, breaks + 1)
    # first and last sample of a closed loop coincide
    if closed and len(runs) > 1 and mask[0] and mask[-1]:
        runs = [np.concatenate([runs[-1], runs[0][1:]])] + runs[1:-1]
    return runs


def _refine_edge(margin, lo: float, hi: float, fallback: float) -> float:
    """Parameter in [lo, hi] where margin changes sign"""
    try:
        return optimize.bisect(margin, lo, hi, xtol=1e-15, rtol=1e-15)
    except ValueError:
        return fallback


def build_attractor(dominants: Sequence[ZeroInfo], resolution: Optional[int] = None,
                    tol: Optional[float] = None) -> AttractorGeometry:
    """The union of the boundaries of D_a over proper dominant zeros, as sampled arcs and segments"""
    resolution = resolution or settings.resolution
    tol = tol if tol is not None else settings.tie_tol
    if resolution < 64:
        raise InvalidArgumentError(f"resolution must be at least 64, got {resolution}")

    excluded = [z for z in dominants if z.dominance == Dominance.improper_dominant]
    proper = [z for z in dominants if z.is_proper]
    for z in excluded:
        logger.warning(f"Excluding improper dominant zero {z.label()} from the attractor")
    if not proper:
        raise InvalidArgumentError("build_attractor needs at least one proper dominant zero")

    values = np.array([z.value for z in proper])
    geometry = AttractorGeometry(excluded=excluded)

    # arcs: curve samples where the owner attains the minimum of |phi|
    for k, a in enumerate(proper):
        curve = np.array(szego_samples(a, resolution).samples)
        others = np.delete(values, k)
        if len(others):
            levels = log_phi_abs(np.outer(others, curve))
            keep = np.all(levels >= math.log1p(-tol), axis=0)
        else:
            keep = np.ones(len(curve), dtype=bool)
        for run in _runs(keep, closed=True):
            points = curve[run].tolist()
            geometry.arcs.append(AttractorArc(owner=a, points=points))
            geometry.all_points += [AttractorPoint(point=p, kind=PieceKind.arc, owner1=a.label()) for p in points]

    # segments: bisector chords between curve intersections, clipped to where a and b stay minimal
    for i in range(len(proper)):
        for j in range(i + 1, len(proper)):
            a, b = proper[i], proper[j]
            ends = curve_curve_intersections(a, b, tol)
            if len(ends) != 2:
                continue
            p0, p1 = ends
            count = max(16, math.ceil(abs(p1 - p0) * abs(a.value) * resolution / STANDARD_CURVE_LENGTH))
            taus = np.linspace(0.0, 1.0, count + 1)
            chord = p0 + taus * (p1 - p0)
            others = np.array([values[k] for k in range(len(proper)) if k not in (i, j)])

            def margin(tau: float) -> float:
                x = p0 + tau * (p1 - p0)
                return float((log_phi_abs(others * x) - log_phi_abs(a.value * x)).min())

            if len(others):
                keep = np.all(log_phi_abs(np.outer(others, chord)) - log_phi_abs(a.value * chord)
                              >= math.log1p(-tol), axis=0)
            else:
                keep = np.ones(len(chord), dtype=bool)
            keep &= log_phi_abs(a.value * chord) <= math.log1p(tol)

            for run in _runs(keep, closed=False):
                lo_tau, hi_tau = taus[run[0]], taus[run[-1]]
                if run[0] > 0:
                    lo_tau = _refine_edge(margin, taus[run[0] - 1], taus[run[0]], taus[run[0]])
                if run[-1] < count:
                    hi_tau = _refine_edge(margin, taus[run[-1]], taus[run[-1] + 1], taus[run[-1]])
                start, end = p0 + lo_tau * (p1 - p0), p0 + hi_tau * (p1 - p0)
                points = [start] + [p for p in chord[run].tolist() if p != start and p != end] + [end]
                geometry.segments.append(AttractorSegment(owners=(a, b), endpoints=(start, end), points=points))
                geometry.all_points += [
                    AttractorPoint(point=p, kind=PieceKind.segment, owner1=a.label(), owner2=b.label())
                    for p in points
                ]

    logger.info(f"Built attractor from {len(proper)} proper dominant zeros: "
                f"{len(geometry.arcs)} arcs, {len(geometry.segments)} segments, {len(geometry.all_points)} points")
    return geometry


def grid_scan(dominants: Sequence[ZeroInfo], box: Rectangle, step: float,
              tol: Optional[float] = None) -> List[Tuple[complex, Region]]:
    """region_of on a lattice over box, skipping the origin"""
    if step <= 0:
        raise InvalidArgumentError(f"grid step must be positive, got {step}")
    cells = []
    for re in np.arange(box.re_min, box.re_max + step / 2, step):
        for im in np.arange(box.im_min, box.im_max + step / 2, step):
            x = complex(re, im)
            if abs(x) < step / 2:
                continue
            cells.append((x, region_of(x, dominants, tol)))
    return cells


def predicted_log_rate(x: complex, dominants: Sequence[ZeroInfo], tol: Optional[float] = None) -> Optional[float]:
    """Limit of (1/n) ln|f_n(x)|: 0 outside D_0, -ln|phi(ax)| inside D_a, undefined on boundaries"""
    region = region_of(x, dominants, tol)
    if region.kind == RegionKind.exterior:
        return 0.0
    if region.kind == RegionKind.interior:
        return -float(log_phi_abs(region.owners[0].value * complex(x)))
    return None


def _zeros_to_dominance_radius(gf: GeneratingFunction, r0: float, prec: int) -> List[ZeroInfo]:
    radius = dominance_radius(r0)
    for step in (1e-3, 3e-3, 1e-2, 3e-2):
        try:
            return zeros_up_to(gf, radius * (1 + step), prec)
        except InvalidArgumentError:
            continue
    raise InvalidArgumentError(f"zero moduli crowd the dominance radius {radius:.6g}")


def asymptotic_context(gf: GeneratingFunction, rho: float, prec: int,
                       tol_improper: Optional[float] = None) -> AsymptoticContext:
    """
    Zeros of g below rho with singular parts and dominance, ready for the asymptotic formulas.
    Zeros up to the dominance radius are classified even when rho is smaller, and a dominant
    zero at or beyond rho is rejected.
    """
    zeros = zeros_up_to(gf, rho, prec)
    r0 = min(abs(z.value) for z in zeros)
    if rho < dominance_radius(r0):
        beyond = [z for z in classify_dominance(_zeros_to_dominance_radius(gf, r0, prec), tol_improper)
                  if z.is_dominant and abs(z.value) >= rho]
        if beyond:
            raise InvalidArgumentError(
                f"rho={rho} leaves out the dominant zero {beyond[0].label()}; "
                f"choose rho above {max(abs(z.value) for z in beyond):.6g}"
            )
    zeros = classify_dominance(zeros, tol_improper)
    dominants = [z for z in zeros if z.is_dominant]
    for z in dominants:
        if z.is_proper and rho * abs(z.value) <= 1.0:
            raise InvalidArgumentError(f"rho={rho} must exceed 1/|a| = {1 / abs(z.value):.6g} for dominant {z.label()}")
    return AsymptoticContext(gf=gf, rho=rho, zeros=zeros, dominants=dominants)
