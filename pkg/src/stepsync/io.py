"""CSV readers and writers for onset and heel-trace files.

Onsets CSV: ``onset_time_s,foot,source``; trace CSV: ``time_s,heel_y_m,foot``.
Writers prepend a ``# schema_version=1`` comment line; readers accept files
with or without it.  Times are written with full float precision.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .simulate import MarkerTrace
from .timing import FEET, SOURCES, OnsetSeries

SCHEMA_VERSION = 1
ONSET_COLUMNS = ("onset_time_s", "foot", "source")
TRACE_COLUMNS = ("time_s", "heel_y_m", "foot")


def _fmt(x):
    return repr(float(x))


def _write(path, columns, rows):
    buf = io.StringIO()
    buf.write(f"# schema_version={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def _read(path, columns):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SchemaError(f"cannot read file: {exc.strerror}", path) from exc
    lines = text.splitlines()
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    if start >= len(lines):
        raise SchemaError("missing header row", path, start + 1)
    reader = csv.reader(lines[start:])
    header = [h.strip() for h in next(reader)]
    for want, got in zip(columns, header + [None] * len(columns)):
        if got != want:
            raise SchemaError(
                f"expected column {want!r}, found {got!r}" if got else f"missing column {want!r}",
                path, start + 1,
            )
    if len(header) > len(columns):
        raise SchemaError(f"unexpected column {header[len(columns)]!r}", path, start + 1)
    for k, row in enumerate(reader, start=start + 2):
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(columns):
            raise SchemaError(f"expected {len(columns)} fields, got {len(row)}", path, k)
        yield k, [f.strip() for f in row]


def write_onsets_csv(path, *series):
    rows = []
    for s in series:
        rows.extend((_fmt(t), f, s.source) for t, f in zip(s.times, s.feet))
    return _write(path, ONSET_COLUMNS, rows)


def read_onsets_csv(path) -> dict:
    """Onset series keyed by source; only sources present in the file appear."""
    data = {s: ([], []) for s in SOURCES}
    for line, (t, foot, source) in _read(path, ONSET_COLUMNS):
        try:
            value = float(t)
        except ValueError:
            raise SchemaError(f"onset_time_s is not a number: {t!r}", path, line) from None
        if foot not in FEET:
            raise SchemaError(f"foot must be L or R, got {foot!r}", path, line)
        if source not in SOURCES:
            raise SchemaError(f"source must be participant or cue, got {source!r}", path, line)
        data[source][0].append(value)
        data[source][1].append(foot)
    out = {}
    for source, (times, feet) in data.items():
        if not times:
            continue
        order = np.argsort(times, kind="stable")
        times = np.asarray(times)[order]
        if np.any(np.diff(times) <= 0):
            raise SchemaError(f"duplicate {source} onset times", path)
        out[source] = OnsetSeries(times, tuple(np.asarray(feet)[order]), source)
    return out


def write_trace_csv(path, trace: MarkerTrace):
    rows = []
    for foot, (t, y) in trace.channels.items():
        rows.extend((_fmt(a), _fmt(b), foot) for a, b in zip(t, y))
    return _write(path, TRACE_COLUMNS, rows)


def read_trace_csv(path, source="participant", sample_rate=None) -> MarkerTrace:
    """Load a trace; the sample rate is inferred from the median timestamp step if not given."""
    cols = {f: ([], []) for f in FEET}
    for line, (t, y, foot) in _read(path, TRACE_COLUMNS):
        try:
            tv, yv = float(t), float(y)
        except ValueError:
            raise SchemaError("time_s and heel_y_m must be numbers", path, line) from None
        if foot not in FEET:
            raise SchemaError(f"foot must be L or R, got {foot!r}", path, line)
        cols[foot][0].append(tv)
        cols[foot][1].append(yv)
    channels = {f: (np.array(t), np.array(y)) for f, (t, y) in cols.items() if t}
    if not channels:
        raise SchemaError("trace file has no samples", path)
    if sample_rate is None:
        steps = np.concatenate([np.diff(t) for t, _ in channels.values()])
        steps = steps[steps > 0]
        sample_rate = float(1.0 / np.median(steps)) if len(steps) else 0.0
    return MarkerTrace(channels, sample_rate, source)
