"""Byte-stable CSV/JSON writers and the counting-data reader."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile

import numpy as np

from . import __version__
from .dispersion import CountingData
from .errors import ProfileFormatError


def fmt(value):
    """Shortest round-trip text for a scalar."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, complex):
        return {"re": _clean(obj.real), "im": _clean(obj.imag)}
    return obj


def atomic_write(path, text):
    """Write ``text`` next to ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buffer.getvalue()


def json_text(payload, **meta):
    """Indented JSON with a ``meta`` block carrying the package version and ``meta``."""
    body = dict(_clean(payload))
    body["meta"] = {"package": "stratwave", "version": __version__, **_clean(meta)}
    return json.dumps(body, indent=2, allow_nan=False) + "\n"


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def write_json(path, payload, **meta):
    atomic_write(path, json_text(payload, **meta))


def counting_rows(data):
    for i, xi in enumerate(data.xi_grid):
        for m, E in enumerate(data.E_grid):
            yield xi, E, int(data.counts[i, m])


def read_counting_csv(source):
    """Long-form ``xi,E,count`` table back into a :class:`CountingData` grid."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, encoding="utf-8") as handle:
            text = handle.read()
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader, [])]
    if header != ["xi", "E", "count"]:
        raise ProfileFormatError(f"counting CSV needs header xi,E,count, got {header}",
                                 field="header")
    table = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            xi, E, count = float(row[0]), float(row[1]), int(row[2])
        except (ValueError, IndexError) as exc:
            raise ProfileFormatError(f"line {lineno}: malformed row {row}", field=f"line {lineno}") from exc
        table[(xi, E)] = count
    xis = sorted({k[0] for k in table})
    Es = sorted({k[1] for k in table})
    if len(table) != len(xis) * len(Es):
        raise ProfileFormatError("counting CSV does not cover a full xi x E grid", field="rows")
    counts = np.array([[table[(xi, E)] for E in Es] for xi in xis], dtype=np.int64)
    return CountingData(np.array(xis), np.array(Es), counts)
