"""Run configs and bit-stable output files."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path

import jsonschema

_PHI = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["constant", "theta", "reciprocal_log", "power_log", "loglog",
                          "table", "piecewise"]},
        "scale": {"type": "number", "minimum": 0},
    },
}

_WINDOW = {
    "type": "object",
    "required": ["k0", "K", "n_max"],
    "properties": {k: {"type": "integer", "minimum": 1} for k in ("k0", "K", "n_max")},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["set"],
    "properties": {
        "set": {
            "type": "object",
            "required": ["constructor"],
            "properties": {
                "constructor": {"enum": ["middle_third", "ratios", "gaps", "separation",
                                         "continuity_failure", "continuum", "block_arrangement",
                                         "decreasing_example"]},
                "params": {"type": "object"},
            },
        },
        "phi": {"type": "array", "items": _PHI},
        "theta_grid": {"type": "array", "items": {"type": "number"}},
        "window": {"oneOf": [_WINDOW, {"type": "null"}]},
        "windows": {"type": "array", "items": _WINDOW},
        "oracle": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}


def validate_config(cfg):
    jsonschema.validate(cfg, CONFIG_SCHEMA)
    return cfg


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return validate_config(json.load(fh))


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return _fmt(v.item())
    return "" if v is None else str(v)


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    return atomic_write_text(path, csv_text(header, rows))


def write_json(path, obj):
    return atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
