from __future__ import annotations

import math

import pytest

from scenofuzz import canonical


def test_sorted_keys_compact():
    assert canonical.dumps({"b": 1, "a": 2}) == '{"a":2,"b":1}'


def test_float_formatting_keeps_type_through_round_trip():
    for value in [0.1, 1.0 / 3.0, 2.0, -0.0, 1e20, 5e-324, -273.15]:
        text = canonical.dumps(value)
        back = canonical.loads(text)
        assert isinstance(back, float), text
        assert back == value or (math.isnan(back) and math.isnan(value))
    assert canonical.loads(canonical.dumps(7)) == 7
    assert isinstance(canonical.loads(canonical.dumps(7)), int)


def test_nested_round_trip_exact():
    doc = {"xs": [0.1 + 0.2, 1e-17, 3.0], "flag": True, "name": "aé",
           "inner": {"z": None, "a": [1, 2.5]}}
    assert canonical.loads(canonical.dumps(doc)) == doc


def test_repeated_serialization_identical():
    doc = {"values": [k * 0.1 for k in range(50)]}
    assert canonical.dumps(doc) == canonical.dumps(doc)
    assert canonical.sha256(doc) == canonical.sha256(doc)


def test_rejects_non_finite():
    with pytest.raises(canonical.CanonicalError):
        canonical.dumps(float("nan"))
    with pytest.raises(canonical.CanonicalError):
        canonical.dumps({"x": float("inf")})


def test_rejects_unsupported_types():
    with pytest.raises(canonical.CanonicalError):
        canonical.dumps({1: "non-string key"})
    with pytest.raises(canonical.CanonicalError):
        canonical.dumps(object())
