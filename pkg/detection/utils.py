# detection/utils.py
import csv
import io
import json
import math
import struct

import numpy as np

from .exceptions import ConfigurationError

HEADER = struct.Struct("<Q")


def format_value(value) -> str:
    """Text form of a table cell; floats use the shortest repr that parses back to the same double."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, np.integer):
        return str(int(value))
    return "" if value is None else str(value)


def _columns(rows, columns=None):
    if columns is not None:
        return list(columns)
    seen = {}
    for row in rows:
        for key in row:
            seen.setdefault(key, None)
    return list(seen)


def export_rows_to_csv(rows, columns=None) -> bytes:
    """
    Render result rows as UTF-8 CSV with a header row (RFC 4180 quoting).
    """
    buffer = io.StringIO(newline="")
    writer = csv.writer(buffer, lineterminator="\r\n")
    columns = _columns(rows, columns)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(column)) for column in columns])
    return buffer.getvalue().encode("utf-8")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(key): _jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else format_value(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def export_to_json(data) -> bytes:
    return (json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n").encode("utf-8")


def dump_observation(X) -> bytes:
    """8-byte little-endian length header, then the values as little-endian float64."""
    X = np.ascontiguousarray(np.asarray(X, dtype="<f8").ravel())
    return HEADER.pack(X.size) + X.tobytes()


def load_observation(data: bytes) -> np.ndarray:
    if len(data) < HEADER.size:
        raise ConfigurationError("Observation file is shorter than its length header")
    (length,) = HEADER.unpack_from(data)
    expected = HEADER.size + 8 * length
    if len(data) != expected:
        raise ConfigurationError(
            f"Observation file holds {len(data)} bytes, header announces {length} values ({expected} bytes)"
        )
    return np.frombuffer(data, dtype="<f8", offset=HEADER.size).astype(np.float64)
