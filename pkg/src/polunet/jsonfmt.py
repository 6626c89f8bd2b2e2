"""Deterministic JSON emission with fixed-significant-digit floats.

The stdlib encoder prints floats with repr, which is shortest-round-trip
rather than a fixed digit budget; reports here pin the format (17
significant digits for analysis artifacts, 9 for training metrics) so that
re-emitting identical data yields byte-identical files.
"""

from __future__ import annotations

import math


def format_real(value: float, digits: int = 17) -> str:
    value = float(value)
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    return f"{value:.{digits}g}"


def dumps(obj, digits: int = 17, indent: int = 2, _level: int = 0) -> str:
    """Serialize dicts/lists/scalars to JSON text with %.<digits>g floats.

    Dict keys keep their insertion order, which the callers fix explicitly.
    """
    pad = " " * (indent * _level)
    inner = " " * (indent * (_level + 1))
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, str):
        escaped = obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
        return f'"{escaped}"'
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_real(obj, digits)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f'{inner}"{key}": {dumps(val, digits, indent, _level + 1)}'
            for key, val in obj.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = [f"{inner}{dumps(val, digits, indent, _level + 1)}" for val in obj]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    # numpy scalars and similar
    if hasattr(obj, "item"):
        return dumps(obj.item(), digits, indent, _level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_file(obj, path, digits: int = 17) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj, digits) + "\n")
