"""CSV and JSON helpers (rows are time steps, columns are coordinates)."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError
from .stats import TimeSeries

__all__ = ["read_series_csv", "parse_series_csv", "write_matrix_csv", "write_records_csv", "write_json"]


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_series_csv(text: str, source: str = "<input>") -> TimeSeries:
    """Parse CSV text into a series; an optional non-numeric first row is a header."""
    rows = []
    width = None
    for lineno, row in enumerate(csv.reader(text.splitlines()), 1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and not all(_is_number(c) for c in row):
            width = len(row)
            continue
        if width is None:
            width = len(row)
        if len(row) != width:
            raise DataError(f"{source}: line {lineno}: expected {width} columns, found {len(row)}")
        try:
            vals = [float(c) for c in row]
        except ValueError:
            bad = next(c for c in row if not _is_number(c))
            raise DataError(f"{source}: line {lineno}: cannot parse {bad.strip()!r} as a number") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{source}: line {lineno}: non-finite value")
        rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{source}: need at least two data rows, found {len(rows)}")
    return TimeSeries(np.array(rows).T)


def read_series_csv(path) -> TimeSeries:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: cannot read ({exc})") from None
    return parse_series_csv(text, str(path))


def write_matrix_csv(path, matrix, header: bool = True) -> None:
    """Write a ``p x n`` matrix as ``n`` rows; floats use shortest round-trip repr."""
    m = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{i + 1}" for i in range(m.shape[0])])
        for col in m.T:
            w.writerow([repr(float(v)) for v in col])


def write_records_csv(path, records: Iterable[Mapping]) -> None:
    records = list(records)
    keys: list[str] = []
    for rec in records:
        keys.extend(k for k in rec if k not in keys)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(records)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
