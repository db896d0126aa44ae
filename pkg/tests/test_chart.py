import numpy as np
import pytest

from vizgrad.chart import (
    ChartSpec,
    ColorEncoding,
    Colormap,
    EncodingMap,
    Layout,
    View,
    validate_spec,
)
from vizgrad.errors import ValidationError
from vizgrad.params import (
    ParamSchema,
    ParamVector,
    bounded_scalar,
    categorical,
    constrain,
    ordered_pair,
    positive_scalar,
    unit_interval_vector,
)
from vizgrad.render import eval_encoding

from conftest import quant_dataset

PLACEHOLDER = ParamSchema([bounded_scalar("_unused", 0.0, 1.0)])
NO_PARAMS = constrain(ParamVector(PLACEHOLDER, np.zeros(1)))


def test_bare_string_coerces_to_encoding():
    spec = ChartSpec(x="x", y="y")
    assert isinstance(spec.x, EncodingMap)
    assert spec.x.attr == "x"


def test_default_polynomial_maps_midpoint_to_midpoint():
    enc = EncodingMap(attr="x", domain=(0.0, 10.0), out_range=(2.0, 4.0))
    r = NO_PARAMS
    mid = eval_encoding(enc, 5.0, r)
    assert mid == pytest.approx(3.0)
    lo = eval_encoding(enc, 0.0, r)
    hi = eval_encoding(enc, 10.0, r)
    assert 2.0 < lo < mid < hi < 4.0  # logistic squash stays interior


def test_eval_encoding_monotone_for_default_coeffs():
    enc = EncodingMap(attr="x", domain=(0.0, 1.0))
    r = NO_PARAMS
    vals = [eval_encoding(enc, t, r) for t in np.linspace(0, 1, 9)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_eval_encoding_with_parameter_domain_and_coeffs():
    schema = ParamSchema([ordered_pair("dom", -1.0, 1.0)])
    r = constrain(ParamVector(schema, np.zeros(2)))
    enc = EncodingMap(attr="x", domain="dom", coeffs=(-2.0, 4.0))
    a, b = r["dom"]
    v = eval_encoding(enc, (a + b) / 2.0, r)
    assert v == pytest.approx(0.5)


def test_validate_rejects_unknown_attribute():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    spec = ChartSpec(x="x", y="nope")
    with pytest.raises(ValidationError):
        validate_spec(spec, d, PLACEHOLDER)


def test_validate_rejects_bad_fixed_domain():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    spec = ChartSpec(x=EncodingMap(attr="x", domain=(1.0, 1.0)), y="y")
    with pytest.raises(ValidationError):
        validate_spec(spec, d, PLACEHOLDER)


def test_validate_mixed_attribute_domain_must_be_unit():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    schema = ParamSchema([categorical("c", 2)])
    ok = ChartSpec(
        x=EncodingMap(attr_choice="c", attr_options=("x", "y"), domain=(0.0, 1.0)), y="y"
    )
    validate_spec(ok, d, schema)
    bad = ChartSpec(
        x=EncodingMap(attr_choice="c", attr_options=("x", "y"), domain=(0.0, 2.0)), y="y"
    )
    with pytest.raises(ValidationError):
        validate_spec(bad, d, schema)


def test_validate_attr_choice_option_count_must_match_param():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    schema = ParamSchema([categorical("c", 3)])
    spec = ChartSpec(x=EncodingMap(attr_choice="c", attr_options=("x", "y")), y="y")
    with pytest.raises(ValidationError):
        validate_spec(spec, d, schema)


def test_validate_size_param_must_be_nonnegative_bounded_scalar():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    bad = ParamSchema([bounded_scalar("r", -1.0, 2.0)])
    with pytest.raises(ValidationError):
        validate_spec(ChartSpec(x="x", y="y", size="r"), d, bad)
    good = ParamSchema([bounded_scalar("r", 0.5, 2.0)])
    validate_spec(ChartSpec(x="x", y="y", size="r"), d, good)


def test_validate_fixed_size_must_be_positive():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    with pytest.raises(ValidationError):
        validate_spec(ChartSpec(x="x", y="y", size=0.0), d, PLACEHOLDER)


def test_colormap_delta_l_param_must_be_positive_scalar():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    enc = ColorEncoding(
        encoding=EncodingMap(attr="x", domain=(0.0, 1.0)),
        colormap=Colormap(delta_l="dl"),
    )
    with pytest.raises(ValidationError):
        validate_spec(ChartSpec(x="x", y="y", color=enc), d, ParamSchema([]))
    validate_spec(
        ChartSpec(x="x", y="y", color=enc), d, ParamSchema([positive_scalar("dl")])
    )


def test_layout_requires_views_and_valid_weight():
    chart = ChartSpec(x="x", y="y")
    with pytest.raises(ValidationError):
        Layout(views=())
    with pytest.raises(ValidationError):
        Layout(views=(View(chart=chart),), overlap_weight=-1.0)


def test_layout_view_rect_param_must_be_unit_interval_vector():
    d = quant_dataset(x=[0.0, 1.0], y=[0.0, 1.0])
    chart = ChartSpec(x="x", y="y")
    layout = Layout(views=(View(chart=chart, rect="r0"),))
    with pytest.raises(ValidationError):
        validate_spec(layout, d, ParamSchema([bounded_scalar("r0", 0.0, 1.0)]))
    validate_spec(layout, d, ParamSchema([unit_interval_vector("r0", 4)]))
