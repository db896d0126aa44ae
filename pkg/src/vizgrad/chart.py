"""Declarative description of what to draw.

A ChartSpec names, for each visual channel, either a literal value or a
parameter from the ParamSchema; the rasterizer resolves those against a
Dataset and RealizedParams at render time.  A Layout arranges several
charts on one canvas through per-view rectangle parameters.  Everything
here is inert data plus validation; no pixel math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dataset import QUANTITATIVE, Dataset
from .errors import ValidationError
from .params import ParamSchema

__all__ = [
    "EncodingMap",
    "Colormap",
    "ColorEncoding",
    "ChartSpec",
    "View",
    "Layout",
    "validate_spec",
]

MAX_POLY_COEFFS = 6  # polynomial degree cap K <= 5

Color = tuple[float, float, float]


@dataclass(frozen=True)
class EncodingMap:
    """Attribute -> visual value map: normalize into a domain, run a
    polynomial, squash into an output range.

    The attribute is either fixed (``attr``) or chosen by a categorical
    parameter (``attr_choice`` over ``attr_options``); in the latter case
    candidate columns are normalized by their own extents and soft-mixed
    by the categorical weights, and the domain is the unit interval.
    ``domain`` is a fixed (lo, hi), an ordered_pair parameter name, or
    None for the attribute's observed extent.  ``coeffs`` is a fixed
    tuple or a bounded_vector parameter name.  ``out_range`` is a fixed
    (lo, hi), an ordered_pair parameter name, or a pair of
    bounded_scalar parameter names.
    """

    attr: str | None = None
    attr_choice: str | None = None
    attr_options: tuple[str, ...] = ()
    domain: tuple[float, float] | str | None = None
    # default polynomial sigma(4t - 2) maps domain midpoint to range midpoint
    coeffs: tuple[float, ...] | str = (-2.0, 4.0)
    out_range: tuple[float, float] | tuple[str, str] | str = (0.0, 1.0)


@dataclass(frozen=True)
class Colormap:
    """Two-point colormap in a luminance/chroma space.

    End luminance is start luminance plus a strictly positive increment
    (fixed or a positive_scalar parameter), so the map is always
    luminance-increasing.  Interpolation is linear in (L, u, v); the RGB
    conversion squashes smoothly into [0, 1].
    """

    c0: Color = (0.25, -0.1, -0.35)
    chroma1: tuple[float, float] = (-0.25, 0.25)
    delta_l: float | str = 0.55


@dataclass(frozen=True)
class ColorEncoding:
    """Data-driven color: encoding output t in [0, 1] indexes a Colormap."""

    encoding: EncodingMap
    colormap: Colormap = field(default_factory=Colormap)


@dataclass(frozen=True)
class ChartSpec:
    """One scatter chart: positional encodings plus size/color/opacity
    channels, each a literal or a parameter name."""

    x: EncodingMap | str
    y: EncodingMap | str
    size: float | str | EncodingMap = 3.0
    color: Color | ColorEncoding = (0.12, 0.30, 0.62)
    opacity: float | str = 0.8
    canvas: tuple[int, int] = (256, 256)
    background: Color = (1.0, 1.0, 1.0)
    kind: str = "scatter"

    def __post_init__(self):
        # bare attribute names are shorthand for a default encoding
        for ch in ("x", "y"):
            v = getattr(self, ch)
            if isinstance(v, str):
                object.__setattr__(self, ch, EncodingMap(attr=v))


@dataclass(frozen=True)
class View:
    """A chart placed by a normalized (cx, cy, w, h) rectangle: a
    unit_interval_vector parameter of length 4 or a fixed 4-tuple."""

    chart: ChartSpec
    rect: str | tuple[float, float, float, float] = (0.5, 0.5, 1.0, 1.0)


@dataclass(frozen=True)
class Layout:
    """Several views sharing one canvas.

    View width/height interpolate between min_view_fraction and 1 of the
    canvas, and the rectangle is positioned so it always lies inside the
    canvas.  overlap_weight scales the pairwise overlap penalty.
    """

    views: tuple[View, ...]
    canvas: tuple[int, int] = (256, 256)
    background: Color = (1.0, 1.0, 1.0)
    overlap_weight: float = 0.0
    min_view_fraction: float = 0.1

    def __post_init__(self):
        if len(self.views) < 1:
            raise ValidationError("layout needs at least one view")
        if self.overlap_weight < 0:
            raise ValidationError("overlap_weight must be >= 0")
        if not 0.0 < self.min_view_fraction <= 1.0:
            raise ValidationError("min_view_fraction must be in (0, 1]")


def _check_color(c, what: str) -> None:
    if len(c) != 3 or any(not (0.0 <= float(v) <= 1.0) for v in c):
        raise ValidationError(f"{what}: color channels must be 3 values in [0, 1]")


def _check_param(schema: ParamSchema, name: str, kind: str, what: str, **attrs) -> None:
    if not schema.has(name):
        raise ValidationError(f"{what}: no parameter named {name!r} in schema")
    spec = schema.spec(name)
    if spec.kind != kind:
        raise ValidationError(f"{what}: parameter {name!r} must be {kind}, is {spec.kind}")
    for k, v in attrs.items():
        if getattr(spec, k) != v:
            raise ValidationError(f"{what}: parameter {name!r} needs {k}={v}")


def _check_quant_attr(d: Dataset, name: str, what: str) -> None:
    try:
        a = d.attribute(name)
    except Exception:
        raise ValidationError(f"{what}: dataset has no attribute {name!r}") from None
    if a.kind != QUANTITATIVE:
        raise ValidationError(f"{what}: attribute {name!r} must be quantitative")


def _validate_encoding(e: EncodingMap, d: Dataset, schema: ParamSchema, what: str) -> None:
    if (e.attr is None) == (e.attr_choice is None):
        raise ValidationError(f"{what}: exactly one of attr / attr_choice required")
    if e.attr is not None:
        _check_quant_attr(d, e.attr, what)
    else:
        if len(e.attr_options) < 2:
            raise ValidationError(f"{what}: attr_choice needs >= 2 attr_options")
        for a in e.attr_options:
            _check_quant_attr(d, a, what)
        _check_param(
            schema, e.attr_choice, "categorical", what, num_options=len(e.attr_options)
        )
        if e.domain is not None and not isinstance(e.domain, str):
            lo, hi = e.domain
            if (lo, hi) != (0.0, 1.0):
                raise ValidationError(f"{what}: mixed-attribute domain is the unit interval")
    if isinstance(e.domain, str):
        _check_param(schema, e.domain, "ordered_pair", what)
    elif e.domain is not None:
        lo, hi = float(e.domain[0]), float(e.domain[1])
        if not lo < hi:
            raise ValidationError(f"{what}: fixed domain needs lo < hi")
    if isinstance(e.coeffs, str):
        _check_param(schema, e.coeffs, "bounded_vector", what)
        if schema.spec(e.coeffs).length > MAX_POLY_COEFFS:
            raise ValidationError(f"{what}: polynomial degree cap is {MAX_POLY_COEFFS - 1}")
    else:
        if not 1 <= len(e.coeffs) <= MAX_POLY_COEFFS:
            raise ValidationError(f"{what}: need 1..{MAX_POLY_COEFFS} coefficients")
    r = e.out_range
    if isinstance(r, str):
        _check_param(schema, r, "ordered_pair", what)
    elif len(r) == 2 and all(isinstance(v, str) for v in r):
        for nm in r:
            _check_param(schema, nm, "bounded_scalar", what)
    else:
        lo, hi = float(r[0]), float(r[1])
        if not lo < hi:
            raise ValidationError(f"{what}: fixed range needs lo < hi")


def _validate_chart(c: ChartSpec, d: Dataset, schema: ParamSchema) -> None:
    if c.kind != "scatter":
        raise ValidationError(f"unsupported chart kind {c.kind!r}")
    w, h = c.canvas
    if w < 1 or h < 1:
        raise ValidationError("canvas must have positive area")
    _check_color(c.background, "background")
    _validate_encoding(c.x, d, schema, "x channel")
    _validate_encoding(c.y, d, schema, "y channel")

    if isinstance(c.size, EncodingMap):
        _validate_encoding(c.size, d, schema, "size channel")
    elif isinstance(c.size, str):
        _check_param(schema, c.size, "bounded_scalar", "size channel")
        if schema.spec(c.size).lo < 0:
            raise ValidationError("size channel: radius bounds must be >= 0")
    elif not float(c.size) > 0:
        raise ValidationError("size channel: fixed radius must be > 0")

    if isinstance(c.color, ColorEncoding):
        _validate_encoding(c.color.encoding, d, schema, "color channel")
        r = c.color.encoding.out_range
        if isinstance(r, str) or tuple(map(float, r)) != (0.0, 1.0):
            raise ValidationError("color channel: encoding range is the unit interval")
        dl = c.color.colormap.delta_l
        if isinstance(dl, str):
            _check_param(schema, dl, "positive_scalar", "color channel")
        elif not float(dl) > 0:
            raise ValidationError("color channel: fixed delta_l must be > 0")
    else:
        _check_color(c.color, "mark color")

    if isinstance(c.opacity, str):
        _check_param(schema, c.opacity, "bounded_scalar", "opacity channel")
        sp = schema.spec(c.opacity)
        if sp.lo < 0.02 or sp.hi > 1.0:
            raise ValidationError("opacity channel: bounds must lie within [0.02, 1]")
    elif not 0.02 <= float(c.opacity) <= 1.0:
        raise ValidationError("opacity channel: fixed value must lie in [0.02, 1]")


def validate_spec(spec: ChartSpec | Layout, d: Dataset, schema: ParamSchema) -> None:
    """Check every attribute and parameter reference in a chart or layout;
    raises ValidationError on the first mismatch."""
    if isinstance(spec, ChartSpec):
        _validate_chart(spec, d, schema)
        return
    if not isinstance(spec, Layout):
        raise ValidationError(f"expected ChartSpec or Layout, got {type(spec).__name__}")
    w, h = spec.canvas
    if w < 1 or h < 1:
        raise ValidationError("canvas must have positive area")
    _check_color(spec.background, "background")
    for i, v in enumerate(spec.views):
        _validate_chart(v.chart, d, schema)
        if isinstance(v.rect, str):
            _check_param(schema, v.rect, "unit_interval_vector", f"view {i}", length=4)
        else:
            if len(v.rect) != 4 or any(not 0.0 <= float(t) <= 1.0 for t in v.rect):
                raise ValidationError(f"view {i}: fixed rect needs 4 values in [0, 1]")
