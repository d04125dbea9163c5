"""Deterministic JSON and CSV writers (floats at 17 significant digits)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

SCHEMA = "khessian-report/1"


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _plain(obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_encode(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed at 17 significant digits; key order preserved."""
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([fmt_float(x) if isinstance(x, (float, np.floating)) else x for x in row])
