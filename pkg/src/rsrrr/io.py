"""CSV and JSON helpers shared by the command-line tools.

Matrices are written as plain comma-separated numbers with 17
significant digits, which round-trips IEEE doubles exactly.  Readers
auto-detect an optional single header row (any first row that does not
parse as numbers).  JSON output is deterministic: keys are sorted and
non-finite floats are encoded as strings ("inf", "-inf", "nan").
"""

import json
import math
import os

import numpy as np


def write_matrix_csv(path, m):
    np.savetxt(path, np.atleast_2d(np.asarray(m, dtype=float)),
               fmt="%.17g", delimiter=",")


def _is_numeric_row(line):
    for tok in line.strip().split(","):
        try:
            float(tok)
        except ValueError:
            return False
    return bool(line.strip())


def read_matrix_csv(path):
    """Load a numeric CSV, skipping one header row when present."""
    with open(path) as fh:
        first = fh.readline()
    if not first:
        raise ValueError("%s is empty" % path)
    skip = 0 if _is_numeric_row(first) else 1
    m = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    return m


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        if math.isnan(obj):
            return "nan"
        return "inf" if obj > 0 else "-inf"
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_sanitize(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_rows_csv(path, columns, rows):
    """Write dict rows under a fixed header; floats at full precision."""
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return "%.17g" % v
        return str(v)

    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row.get(c)) for c in columns) + "\n")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
