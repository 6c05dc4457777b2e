"""Readers for the simulator's documented CSV schemas.

The plotting side deliberately re-declares the schemas instead of
importing the simulator, so the two packages can be versioned
independently; any mismatch is reported with the offending column name.
"""
from __future__ import annotations

import csv
import os

import numpy as np

SCHEMA_COLUMNS = {
    "shift_trace_v1": ["t_s", "delta_hz"],
    "zero_span_v1": ["t_s", "value"],
    "demod_trace_v1": ["t_s", "value", "valid"],
    "fast_scan_v1": ["f_hz", "power"],
    "correlation_v1": ["tau_s", "c_value"],
    "rho_summary_v1": ["pair", "rho0"],
    "histogram_v1": ["bin_center_hz", "count"],
    "sweep_v1": ["temperature_k", "fwhm_hz"],
}


class SchemaError(ValueError):
    """Input file does not match the documented schema."""


def read_table(path: str, schema: str):
    """Columns of a schema'd CSV as a dict of numpy arrays (strings for the
    non-numeric pair column)."""
    if not os.path.exists(path):
        raise SchemaError(f"{path}: file not found")
    expected = SCHEMA_COLUMNS[schema]
    header = None
    rows = []
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                continue
            if row:
                rows.append(row)
    if header is None:
        raise SchemaError(f"{path}: empty file, expected columns {expected}")
    for i, name in enumerate(expected):
        if i >= len(header) or header[i] != name:
            found = header[i] if i < len(header) else "<missing>"
            raise SchemaError(f"{path}: column {i} is {found!r}, expected {name!r} "
                              f"(schema {schema})")
    out = {}
    for i, name in enumerate(expected):
        values = [r[i] for r in rows]
        if name == "pair":
            out[name] = np.array(values)
        else:
            try:
                out[name] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise SchemaError(f"{path}: column {name!r} is not numeric: {exc}")
    return out
