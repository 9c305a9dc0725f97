from typing import Any, List, Optional, Tuple, Union
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import settings

# Numeric fields in documents may be strings so decimal input keeps full precision
Number = Union[float, str]


# Generating function documents
class GenFunKind(str, Enum):
    poly = "poly"
    catalog = "catalog"


class CatalogName(str, Enum):
    euler = "euler"
    bernoulli = "bernoulli"
    bessel_j0 = "bessel_j0"
    one_minus_t = "one_minus_t"


CATALOG_ALIASES = {"exp-reciprocal": "one_minus_t", "bessel-j0": "bessel_j0"}


class ComplexValue(BaseModel):
    re: Number = 0.0
    im: Number = 0.0


class RootSpec(BaseModel):
    """One root of an explicit polynomial, cartesian or polar"""
    re: Optional[Number] = None
    im: Optional[Number] = None
    modulus: Optional[Number] = None
    arg_over_pi: Optional[Number] = None
    mult: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_form(self):
        polar = self.modulus is not None or self.arg_over_pi is not None
        cartesian = self.re is not None or self.im is not None
        if polar and cartesian:
            raise ValueError("root: give either re/im or modulus/arg_over_pi, not both")
        if polar and self.modulus is None:
            raise ValueError("root: modulus is required with arg_over_pi")
        if polar:
            if float(self.modulus) == 0.0:
                raise ValueError("root: modulus must be nonzero (g(0) would vanish)")
        elif float(self.re or 0.0) == 0.0 and float(self.im or 0.0) == 0.0:
            raise ValueError("root: a root at 0 makes g(0) = 0")
        return self


class GeneratingFunction(BaseModel):
    """The generating function g(t) of an Appell family"""
    model_config = ConfigDict(frozen=True)

    kind: GenFunKind
    roots: List[RootSpec] = []
    scale: ComplexValue = Field(default_factory=lambda: ComplexValue(re=1.0))
    name: Optional[CatalogName] = None
    order: int = Field(1, ge=1)

    @field_validator("name", mode="before")
    @classmethod
    def canonical_name(cls, value):
        if isinstance(value, str):
            return CATALOG_ALIASES.get(value, value)
        return value

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == GenFunKind.catalog:
            if self.name is None:
                raise ValueError("name: catalog generating functions need a name")
            if self.roots:
                raise ValueError("roots: only poly generating functions list roots")
        else:
            if float(self.scale.re) == 0.0 and float(self.scale.im) == 0.0:
                raise ValueError("scale: leading factor must be nonzero")
        return self

    def label(self) -> str:
        if self.kind == GenFunKind.catalog:
            return f"{self.name.value}(order={self.order})"
        return f"poly(degree={sum(r.mult for r in self.roots)})"


# Zeros of g
class Dominance(str, Enum):
    minimal = "minimal"
    proper_dominant = "proper-dominant"
    improper_dominant = "improper-dominant"
    non_dominant = "non-dominant"
    unclassified = "unclassified"


class ZeroInfo(BaseModel):
    """A zero a of g with its multiplicity, modulus class and singular part"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    a: Any
    beta: int = Field(..., ge=1)
    modulus_class: int = Field(0, ge=0)
    dominance: Dominance = Dominance.unclassified
    b_coeffs: Tuple[Any, ...] = ()

    @property
    def is_dominant(self) -> bool:
        return self.dominance in (
            Dominance.minimal,
            Dominance.proper_dominant,
            Dominance.improper_dominant,
        )

    @property
    def is_proper(self) -> bool:
        return self.dominance in (Dominance.minimal, Dominance.proper_dominant)

    @property
    def value(self) -> complex:
        return complex(self.a)

    def label(self) -> str:
        z = self.value
        return f"{z.real:.10g}{z.imag:+.10g}i"


# Polynomials and roots
class BigPoly(BaseModel):
    """Dense polynomial, ascending coefficients, arbitrary-precision complex"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: Tuple[Any, ...]
    prec: int

    @field_validator("coeffs", mode="before")
    @classmethod
    def trim(cls, value):
        coeffs = list(value)
        while coeffs and coeffs[-1] == 0:
            coeffs.pop()
        if not coeffs:
            raise ValueError("coeffs: the zero polynomial has no degree")
        return tuple(coeffs)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1


class RootCluster(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    center: Any
    members: List[int]

    @property
    def size(self) -> int:
        return len(self.members)


class RootSet(BaseModel):
    """Roots of a BigPoly with their certification data"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    roots: Tuple[Any, ...]
    residual_bound: float
    iterations: int
    prec: int
    residuals: Tuple[float, ...] = ()
    converged: bool = True
    clusters: List[RootCluster] = []

    def as_complex(self) -> List[complex]:
        return [complex(r) for r in self.roots]


class Rectangle(BaseModel):
    re_min: float
    re_max: float
    im_min: float
    im_max: float

    @model_validator(mode="after")
    def check_sides(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("rectangle: need re_min < re_max and im_min < im_max")
        return self

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (self.re_min + margin < z.real < self.re_max - margin
                and self.im_min + margin < z.imag < self.im_max - margin)

    def boundary_distance(self, z: complex) -> float:
        """Distance from z to the rectangle's boundary (inside or out)"""
        dx = max(self.re_min - z.real, 0.0, z.real - self.re_max)
        dy = max(self.im_min - z.imag, 0.0, z.imag - self.im_max)
        if dx > 0.0 or dy > 0.0:
            return (dx * dx + dy * dy) ** 0.5
        return min(z.real - self.re_min, self.re_max - z.real,
                   z.imag - self.im_min, self.im_max - z.imag)


class AsymptoticContext(BaseModel):
    """Inputs of the asymptotic formulas: g, cutoff rho, zeros below rho"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    gf: GeneratingFunction
    rho: float
    zeros: List[ZeroInfo]
    dominants: List[ZeroInfo]

    @property
    def r0(self) -> float:
        return min(abs(z.value) for z in self.zeros)


# Attractor geometry
class PieceKind(str, Enum):
    arc = "arc"
    segment = "segment"


class RegionKind(str, Enum):
    exterior = "exterior"
    interior = "interior"
    boundary_arc = "boundary-arc"
    boundary_segment = "boundary-segment"


class Region(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: RegionKind
    owners: List[ZeroInfo] = []


class SzegoCurve(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    owner: Any  # complex a, or the ZeroInfo it came from
    samples: List[complex]


class BisectorLine(BaseModel):
    """The line alpha*s - beta*t = c, i.e. Re((b - a) x) = ln|b/a|"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    a: ZeroInfo
    b: ZeroInfo
    alpha: float
    beta: float
    c: float

    @property
    def normal(self) -> complex:
        return complex(self.alpha, -self.beta)

    def foot(self) -> complex:
        """Point of the line closest to the origin"""
        nrm = self.normal
        return self.c * nrm / abs(nrm) ** 2

    def direction(self) -> complex:
        nrm = self.normal
        return 1j * nrm / abs(nrm)

    def residual(self, x: complex) -> float:
        return self.alpha * x.real - self.beta * x.imag - self.c


class AttractorArc(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    owner: ZeroInfo
    points: List[complex]


class AttractorSegment(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    owners: Tuple[ZeroInfo, ZeroInfo]
    endpoints: Tuple[complex, complex]
    points: List[complex]


class AttractorPoint(BaseModel):
    point: complex
    kind: PieceKind
    owner1: str
    owner2: Optional[str] = None


class AttractorGeometry(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    arcs: List[AttractorArc] = []
    segments: List[AttractorSegment] = []
    all_points: List[AttractorPoint] = []
    excluded: List[ZeroInfo] = []

    def points(self) -> List[complex]:
        return [p.point for p in self.all_points]


# Validation reports
class DensityBin(BaseModel):
    lo: float
    hi: float
    count: int
    expected: float


class DensityHistogram(BaseModel):
    label: str
    kind: PieceKind
    owners: List[str]
    coordinate: str
    bins: List[DensityBin]
    selected: int
    max_rel_dev: float


class AsymRow(BaseModel):
    x_re: float
    x_im: float
    n: int
    mode: str
    exact_re: float
    exact_im: float
    approx_re: float
    approx_im: float
    abs_err: float
    rel_err: float
    order: Optional[float] = None
    ratio: Optional[float] = None
    log_rate: float
    log_rate_limit: Optional[float] = None
    error_bound_bits: float


class CountCheck(BaseModel):
    rectangle: Rectangle
    counted: int
    expected: int

    @property
    def agrees(self) -> bool:
        return self.counted == self.expected


class CheckResult(BaseModel):
    name: str
    value: Optional[float] = None
    threshold: Optional[str] = None
    passed: bool
    skipped: bool = False
    note: str = ""


class ValidationReport(BaseModel):
    degree: int
    hausdorff: float
    directed_zeros_to_attractor: float
    directed_attractor_to_zeros: float
    density: List[DensityHistogram] = []
    density_max_rel_dev: Optional[float] = None
    asym_table: List[AsymRow] = []
    count_checks: List[CountCheck] = []
    outliers: List[Tuple[float, float]] = []
    checks: List[CheckResult] = []
    passed: bool = False


# Run configuration
class Tolerances(BaseModel):
    tie_tol: float = Field(default_factory=lambda: settings.tie_tol, gt=0)
    improper_tol: float = Field(default_factory=lambda: settings.improper_tol, gt=0)
    arc_bin_threshold: float = Field(default_factory=lambda: settings.arc_bin_threshold, gt=0)
    segment_bin_threshold: float = Field(default_factory=lambda: settings.segment_bin_threshold, gt=0)
    hausdorff_max: Optional[float] = Field(None, gt=0)
    containment_margin: float = Field(0.05, gt=0)
    exterior_ratio_min: float = Field(1.4, gt=0)
    exterior_ratio_max: float = Field(2.8, gt=0)


class AsymMode(str, Enum):
    exterior = "exterior"
    dominant_sum = "dominant-sum"
    g1_form = "g1-form"


class AsymPoint(BaseModel):
    re: float
    im: float = 0.0
    mode: AsymMode = AsymMode.exterior

    @property
    def x(self) -> complex:
        return complex(self.re, self.im)


class ValidationOptions(BaseModel):
    compare_degree: Optional[int] = Field(None, ge=1)
    n_list: List[int] = []
    asym_points: List[AsymPoint] = []
    count_rectangles: int = Field(10, ge=0)
    arc_bins: int = Field(8, ge=4)
    segment_bins: int = Field(6, ge=4)


class RunConfig(BaseModel):
    genfun: GeneratingFunction
    degree: int = Field(100, ge=0)
    rho: Optional[float] = Field(None, gt=0)
    precision: Optional[int] = Field(None, ge=64)
    resolution: int = Field(default_factory=lambda: settings.resolution, ge=64)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    output_dir: str = Field(default_factory=lambda: settings.output_directory)
    seed: int = Field(default_factory=lambda: settings.default_seed)
    svg: bool = True
    overlay_zeros: bool = False
    d0_boundary_only: bool = False
    validation: ValidationOptions = Field(default_factory=ValidationOptions)
