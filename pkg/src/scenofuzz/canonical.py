"""Canonical JSON serialization.

Every artifact that gets hashed, diffed, or byte-compared (scenario files,
recordings, wire frames, evaluation logs) goes through this encoder so that
the same value always produces the same bytes:

* object keys sorted,
* no insignificant whitespace,
* floats rendered with 17 significant digits (lossless for IEEE doubles),
* floats always carry a decimal point or exponent so the type survives a
  round trip.
"""

from __future__ import annotations

import hashlib
import json
import math
from typing import Any


class CanonicalError(ValueError):
    """Raised for values that have no canonical representation."""


def _format_float(value: float) -> str:
    if math.isnan(value) or math.isinf(value):
        raise CanonicalError(f"non-finite float not allowed: {value!r}")
    text = format(value, ".17g")
    # keep the float/int distinction through a parse round trip
    if "." not in text and "e" not in text and "E" not in text:
        text += ".0"
    return text


def _encode(value: Any, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(str(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, str):
        out.append(json.dumps(value, ensure_ascii=False))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        for i, key in enumerate(sorted(value)):
            if not isinstance(key, str):
                raise CanonicalError(f"object keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise CanonicalError(f"unsupported type {type(value).__name__}")


def dumps(value: Any) -> str:
    """Serialize ``value`` to canonical JSON text."""
    out: list = []
    _encode(value, out)
    return "".join(out)


def dump_bytes(value: Any) -> bytes:
    return dumps(value).encode("utf-8")


def loads(text: str | bytes) -> Any:
    """Parse JSON text. Inverse of :func:`dumps` for supported values."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return json.loads(text)


def sha256(value: Any) -> str:
    """Hex digest of the canonical serialization of ``value``."""
    return hashlib.sha256(dump_bytes(value)).hexdigest()
