"""CSV / JSON serialization of column tables with a metadata header.

Floats are written in shortest round-trip form (``repr``), so a value read
back from either format is bit-identical to the one computed. Non-finite
floats become ``nan``/``inf`` in CSV and ``null`` in JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

FORMATS = ("csv", "json")


def _csv_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _json_value(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if hasattr(value, "item"):  # numpy scalar
        return _json_value(value.item())
    return value


def _check_columns(columns: Mapping[str, Sequence[Any]]) -> int:
    lengths = {len(v) for v in columns.values()}
    if len(lengths) > 1:
        raise ValueError(f"columns have unequal lengths: {sorted(lengths)}")
    return lengths.pop() if lengths else 0


def to_csv(columns: Mapping[str, Sequence[Any]], meta: Mapping[str, Any]) -> str:
    """Metadata as ``# key: json-value`` lines, then a header row and the data."""
    n = _check_columns(columns)
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(_plain(value), sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    writer.writerow(names)
    for r in range(n):
        writer.writerow([_csv_cell(_plain(columns[c][r])) for c in names])
    return buf.getvalue()


def to_json(columns: Mapping[str, Sequence[Any]], meta: Mapping[str, Any]) -> str:
    """``{"meta": ..., "data": {column: [...]}}`` with one line per column."""
    _check_columns(columns)
    lines = [f' {json.dumps(str(k))}: '
             + json.dumps([_json_value(_plain(x)) for x in v], allow_nan=False)
             for k, v in columns.items()]
    meta_text = json.dumps(_plain(meta), sort_keys=True, allow_nan=False)
    return '{"meta": ' + meta_text + ', "data": {\n' + ",\n".join(lines) + "\n}}\n"


def _plain(value: Any) -> Any:
    """Numpy scalars and containers to built-in Python types."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        return value.item()
    return value


def render(columns: Mapping[str, Sequence[Any]], meta: Mapping[str, Any], fmt: str) -> str:
    if fmt == "csv":
        return to_csv(columns, meta)
    if fmt == "json":
        return to_json(columns, meta)
    raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def write(columns: Mapping[str, Sequence[Any]], meta: Mapping[str, Any], fmt: str,
          out: Optional[str] = None) -> None:
    """Render and write to ``out`` (stdout when None or ``-``)."""
    text = render(columns, meta, fmt)
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def read_meta(path: str) -> dict[str, Any]:
    """Metadata block of a file written by :func:`write` (CSV or JSON)."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        return json.loads(text)["meta"]
    meta = {}
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition(":")
        meta[key.strip()] = json.loads(value)
    return meta


def read_columns(path: str) -> tuple[dict[str, Any], dict[str, list]]:
    """``(meta, columns)`` of a written file; CSV cells come back as strings."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        return doc["meta"], doc["data"]
    meta = read_meta(path)
    body = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rows = list(csv.reader(body))
    names = rows[0]
    cols = {name: [row[j] for row in rows[1:]] for j, name in enumerate(names)}
    return meta, cols
