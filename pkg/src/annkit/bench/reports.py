"""Deterministic CSV reports.

Every report starts with the fully resolved parameter set as sorted
"# key=value" lines, then a column header, then the rows. All floats go
through one formatter so identical runs produce identical bytes.
"""

from pathlib import Path

import numpy as np

from ..errors import DataError


def format_value(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_report(path, header: dict, columns, rows) -> None:
    lines = [f"# {k}={format_value(v)}" for k, v in sorted(header.items())]
    lines.append(",".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise DataError("report row width does not match the columns")
        lines.append(",".join(format_value(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path):
    """(header dict, column names, rows as string lists)."""
    header, columns, rows = {}, None, []
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("# "):
            if columns is not None:
                raise DataError(f"{path}: header line after the column row")
            key, _, val = ln[2:].partition("=")
            header[key] = val
        elif columns is None:
            columns = ln.split(",")
        elif ln.strip():
            rows.append(ln.split(","))
    if columns is None:
        raise DataError(f"{path}: no column row")
    return header, columns, rows


def quantile(values, q) -> float:
    """Nearest-rank quantile: always an observed value, never interpolated."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DataError("quantile of an empty sample")
    return float(np.quantile(arr, q, method="nearest"))
