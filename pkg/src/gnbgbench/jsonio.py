"""Deterministic JSON/CSV emission with full-precision floats.

Every float is written with 17 significant digits, which round-trips
float64 bit-exactly through json.loads / float().
"""
from __future__ import annotations

import json

import numpy as np


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _encode(obj, parts: list) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        parts.append(format_float(obj))
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, np.ndarray):
        _encode(obj.tolist(), parts)
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                parts.append(", ")
            if not isinstance(k, str):
                raise TypeError(f"non-string JSON key: {k!r}")
            parts.append(json.dumps(k))
            parts.append(": ")
            _encode(v, parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, v in enumerate(obj):
            if i:
                parts.append(", ")
            _encode(v, parts)
        parts.append("]")
    else:
        raise TypeError(f"unsupported JSON type: {type(obj)!r}")


def dumps(obj) -> str:
    """Serialize to a single-line JSON string with .17g floats, key order preserved."""
    parts: list = []
    _encode(obj, parts)
    return "".join(parts)


def csv_cell(value) -> str:
    """One CSV cell: floats at 17 significant digits, bools as true/false."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


def csv_lines(header: list[str], rows: list[list]) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(csv_cell(v) for v in row))
    return "\n".join(out) + "\n"
