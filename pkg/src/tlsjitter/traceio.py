"""Artifact file formats.

CSV files carry a `# schema=<name>_v1 ...` comment line, then a header
row, then data; all units are SI base units (Hz, s, K).  Large traces use
a compact binary frame: a 16-byte little-endian header (4-byte magic,
float64 dt, uint32 count) followed by count float64 samples; demodulated
frames append count uint8 validity flags after the samples.
"""
from __future__ import annotations

import csv
import os
import struct
import tempfile

import numpy as np

from .detector import DemodulatedTrace
from .dynamics import ShiftTrace
from .errors import ContractError, MissingArtifactError

SHIFT_MAGIC = b"TJS1"
DEMOD_MAGIC = b"TJD1"
_HEADER = struct.Struct("<4sdI")

SCHEMAS = {
    "shift": ("shift_trace_v1", ["t_s", "delta_hz"]),
    "zero_span": ("zero_span_v1", ["t_s", "value"]),
    "demod": ("demod_trace_v1", ["t_s", "value", "valid"]),
    "scan": ("fast_scan_v1", ["f_hz", "power"]),
    "correlation": ("correlation_v1", ["tau_s", "c_value"]),
    "rho_summary": ("rho_summary_v1", ["pair", "rho0"]),
    "histogram": ("histogram_v1", ["bin_center_hz", "count"]),
    "sweep": ("sweep_v1", ["temperature_k", "fwhm_hz"]),
}


def atomic_write_bytes(path, data: bytes):
    """Write via a temp file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def _csv_text(kind: str, rows, extra: str = "") -> str:
    schema, header = SCHEMAS[kind]
    lines = [f"# schema={schema}" + (f" {extra}" if extra else "")]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".12g")


def write_csv(path, kind: str, rows, extra: str = ""):
    atomic_write_text(path, _csv_text(kind, rows, extra))


def read_csv(path, kind: str | None = None):
    """Rows of a schema'd CSV as a list of string lists (comments skipped)."""
    if not os.path.exists(path):
        raise MissingArtifactError(path)
    rows = []
    header = None
    with open(path, newline="") as f:
        for line in f:
            if line.startswith("#"):
                continue
            row = next(csv.reader([line]))
            if header is None:
                header = row
                continue
            rows.append(row)
    if kind is not None and header != SCHEMAS[kind][1]:
        raise ContractError(f"{path}: expected columns {SCHEMAS[kind][1]}, found {header}")
    return header, rows


def write_shift_frame(path, trace: ShiftTrace):
    samples = np.ascontiguousarray(trace.samples, dtype="<f8")
    head = _HEADER.pack(SHIFT_MAGIC, float(trace.dt), samples.size)
    atomic_write_bytes(path, head + samples.tobytes())


def read_shift_frame(path, mode_label: str = "", trajectory_id: int = -1,
                     seed: int = -1) -> ShiftTrace:
    if not os.path.exists(path):
        raise MissingArtifactError(path)
    with open(path, "rb") as f:
        raw = f.read()
    magic, dt, count = _HEADER.unpack_from(raw, 0)
    if magic != SHIFT_MAGIC:
        raise ContractError(f"{path}: bad magic {magic!r} for a shift frame")
    samples = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size).copy()
    return ShiftTrace(mode_label=mode_label, dt=dt, samples=samples,
                      trajectory_id=trajectory_id, seed=seed)


def write_demod_frame(path, trace: DemodulatedTrace):
    samples = np.ascontiguousarray(trace.samples, dtype="<f8")
    mask = np.ascontiguousarray(trace.valid, dtype=np.uint8)
    head = _HEADER.pack(DEMOD_MAGIC, float(trace.dt), samples.size)
    atomic_write_bytes(path, head + samples.tobytes() + mask.tobytes())


def read_demod_frame(path, mode_label: str = "", trajectory_id: int = -1) -> DemodulatedTrace:
    if not os.path.exists(path):
        raise MissingArtifactError(path)
    with open(path, "rb") as f:
        raw = f.read()
    magic, dt, count = _HEADER.unpack_from(raw, 0)
    if magic != DEMOD_MAGIC:
        raise ContractError(f"{path}: bad magic {magic!r} for a demod frame")
    off = _HEADER.size
    samples = np.frombuffer(raw, dtype="<f8", count=count, offset=off).copy()
    mask = np.frombuffer(raw, dtype=np.uint8, count=count, offset=off + 8 * count)
    return DemodulatedTrace(mode_label=mode_label, dt=dt, samples=samples,
                            valid=mask.astype(bool), trajectory_id=trajectory_id)


def write_shift_csv(path, trace: ShiftTrace):
    t = trace.t
    write_csv(path, "shift",
              ((t[i], trace.samples[i]) for i in range(trace.samples.size)),
              extra=f"mode={trace.mode_label} trajectory={trace.trajectory_id} dt_s={trace.dt:.12g}")


def write_zero_span_csv(path, dt: float, values: np.ndarray, extra: str = ""):
    write_csv(path, "zero_span",
              ((i * dt, values[i]) for i in range(values.size)), extra=extra)


def write_demod_csv(path, trace: DemodulatedTrace):
    t = trace.t
    write_csv(path, "demod",
              ((t[i], trace.samples[i], bool(trace.valid[i]))
               for i in range(trace.samples.size)),
              extra=f"mode={trace.mode_label} trajectory={trace.trajectory_id} dt_s={trace.dt:.12g}")
