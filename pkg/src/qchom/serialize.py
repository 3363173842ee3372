"""Deterministic JSON/CSV writers; every float is printed with 17 significant digits."""
from __future__ import annotations

import io
import json
import math
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (bool, np.bool_)):
        out.write("true" if obj else "false")
    elif obj is None:
        out.write("null")
    elif isinstance(obj, (int, np.integer)):
        out.write(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.write(fmt(obj))
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.write(pad + json.dumps(str(k)) + ": ")
            _encode(v, indent, level + 1, out)
            out.write(",\n" if i < len(items) - 1 else "\n")
        out.write(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        flat = all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj)
        if flat:
            out.write("[")
            for i, v in enumerate(obj):
                _encode(v, indent, level + 1, out)
                if i < len(obj) - 1:
                    out.write(", ")
            out.write("]")
            return
        out.write("[\n")
        for i, v in enumerate(obj):
            out.write(pad)
            _encode(v, indent, level + 1, out)
            out.write(",\n" if i < len(obj) - 1 else "\n")
        out.write(end + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    buf = io.StringIO()
    _encode(obj, indent, 0, buf)
    buf.write("\n")
    return buf.getvalue()


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def csv_text(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"
