"""Writers and readers for the CSV, SVG, JSON and text artifacts of a run"""
import csv
import logging
import os
from typing import List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import mpmath  # noqa: E402

from app.errors import DataIOError  # noqa: E402
from app.models.schemas import AttractorGeometry, BigPoly, RootSet, ValidationReport  # noqa: E402

logger = logging.getLogger(__name__)

DIGITS = 25

# stable ids and no timestamp, so identical runs give identical SVG bytes
plt.rcParams["svg.hashsalt"] = "appell-attractor"
SVG_METADATA = {"Date": None, "Creator": None}


def _fmt(value) -> str:
    return mpmath.nstr(mpmath.mpf(value), DIGITS)


def _open(path: str):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    return open(path, "w", newline="")


def write_coeffs_csv(path: str, poly: BigPoly) -> str:
    with mpmath.workprec(poly.prec):
        with _open(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "re", "im"])
            for k, c in enumerate(poly.coeffs):
                c = mpmath.mpc(c)
                writer.writerow([k, _fmt(c.real), _fmt(c.imag)])
    logger.info(f"Wrote {poly.degree + 1} coefficients to {path}")
    return path


def write_roots_csv(path: str, roots: RootSet) -> str:
    """Roots ordered by real part then imaginary part, with their residuals"""
    with mpmath.workprec(roots.prec):
        rows = sorted(zip(roots.roots, roots.residuals or [0.0] * len(roots.roots)),
                      key=lambda item: (mpmath.re(item[0]), mpmath.im(item[0])))
        with _open(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["re", "im", "residual"])
            for z, residual in rows:
                z = mpmath.mpc(z)
                writer.writerow([_fmt(z.real), _fmt(z.imag), _fmt(residual)])
    logger.info(f"Wrote {len(rows)} roots to {path}")
    return path


def read_roots_csv(path: str, prec: int) -> List:
    if not os.path.exists(path):
        raise DataIOError(f"zeros file {path} not found; run the zeros command first or drop --reuse")
    try:
        with open(path, newline="") as fh, mpmath.workprec(prec):
            return [mpmath.mpc(row["re"], row["im"]) for row in csv.DictReader(fh)]
    except (KeyError, ValueError, OSError) as e:
        raise DataIOError(f"could not read zeros from {path}: {e}")


def write_attractor_csv(path: str, geometry: AttractorGeometry) -> str:
    with _open(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["re", "im", "kind", "owner1", "owner2"])
        for p in geometry.all_points:
            writer.writerow([f"{p.point.real:.17g}", f"{p.point.imag:.17g}", p.kind.value, p.owner1, p.owner2 or ""])
    logger.info(f"Wrote {len(geometry.all_points)} attractor points to {path}")
    return path


def _fit_view(ax, points: Sequence[complex]) -> None:
    """Equal-aspect view fitted to the data with a 5% margin"""
    if not points:
        return
    re = [p.real for p in points]
    im = [p.imag for p in points]
    span = max(max(re) - min(re), max(im) - min(im), 1e-9)
    pad = 0.05 * span
    ax.set_xlim(min(re) - pad, max(re) + pad)
    ax.set_ylim(min(im) - pad, max(im) + pad)
    ax.set_aspect("equal")


def plot_zeros_svg(path: str, zeros: Sequence[complex], title: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter([z.real for z in zeros], [z.imag for z in zeros], s=4, color="black")
    ax.set_title(title)
    _fit_view(ax, list(zeros))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def plot_attractor_svg(path: str, geometry: AttractorGeometry, title: str,
                       zeros: Optional[Sequence[complex]] = None, d0_boundary_only: bool = False) -> str:
    """Arcs colored by owner, segments dashed; optionally the zeros on top"""
    fig, ax = plt.subplots(figsize=(6, 6))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    owners = []
    for arc in geometry.arcs:
        label = arc.owner.label()
        if label not in owners:
            owners.append(label)
        color = colors[owners.index(label) % len(colors)]
        ax.plot([p.real for p in arc.points], [p.imag for p in arc.points], color=color, linewidth=1.2)
    if not d0_boundary_only:
        for seg in geometry.segments:
            ax.plot([p.real for p in seg.points], [p.imag for p in seg.points], color="gray",
                    linestyle="--", linewidth=1.0)

    shown = geometry.points()
    if zeros:
        ax.scatter([z.real for z in zeros], [z.imag for z in zeros], s=3, color="black", zorder=3)
        shown = shown + list(zeros)
    ax.set_title(title)
    _fit_view(ax, shown)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    return path


def write_report_json(path: str, report: ValidationReport) -> str:
    with _open(path) as fh:
        fh.write(report.model_dump_json(indent=2))
        fh.write("\n")
    return path


def write_report_text(path: str, report: ValidationReport) -> str:
    lines = [
        f"Validation at degree {report.degree}: {'PASS' if report.passed else 'FAIL'}",
        f"hausdorff                  {report.hausdorff:.6g}",
        f"zeros -> attractor         {report.directed_zeros_to_attractor:.6g}",
        f"attractor -> zeros         {report.directed_attractor_to_zeros:.6g}",
        f"outliers                   {len(report.outliers)}",
        "",
        f"{'check':<48} {'value':>14} {'threshold':>20}  result",
    ]
    for check in report.checks:
        value = "" if check.value is None else f"{check.value:.6g}"
        result = "skipped" if check.skipped else "pass" if check.passed else "FAIL"
        if check.note:
            result += f" ({check.note})"
        lines.append(f"{check.name:<48} {value:>14} {check.threshold or '':>20}  {result}")

    if report.asym_table:
        lines += ["", f"{'x':>22} {'n':>6} {'mode':>13} {'abs err':>12} {'rel err':>12} {'order':>8} "
                      f"{'log rate':>10} {'limit':>10}"]
        for row in report.asym_table:
            x = complex(row.x_re, row.x_im)
            order = "" if row.order is None else f"{row.order:.3f}"
            limit = "" if row.log_rate_limit is None else f"{row.log_rate_limit:.4f}"
            lines.append(f"{str(x):>22} {row.n:>6} {row.mode:>13} {row.abs_err:>12.4e} {row.rel_err:>12.4e} "
                         f"{order:>8} {row.log_rate:>10.4f} {limit:>10}")

    for hist in report.density:
        lines += ["", f"{hist.label} ({hist.coordinate}), {hist.selected} zeros, max deviation {hist.max_rel_dev:.3f}"]
        for b in hist.bins:
            lines.append(f"  [{b.lo:+.5f}, {b.hi:+.5f})  {b.count:>6}  expected {b.expected:.2f}")

    with _open(path) as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def write_density_csv(directory: str, report: ValidationReport) -> List[str]:
    paths = []
    for k, hist in enumerate(report.density):
        path = os.path.join(directory, f"density_{k}_{hist.kind.value}.csv")
        with _open(path) as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lo", "hi", "count", "expected"])
            for b in hist.bins:
                writer.writerow([f"{b.lo:.17g}", f"{b.hi:.17g}", b.count, f"{b.expected:.17g}"])
        paths.append(path)
    return paths
