"""Byte-stable CSV emission.

All harness outputs go through write_csv so that every file has a fixed
column order, floats printed with 17 significant digits, LF-terminated
rows, and no locale or platform dependence. Identical inputs therefore
produce identical bytes, which the CLI tests pin with rerun comparisons.
"""

from __future__ import annotations

import numbers
from collections.abc import Iterable, Sequence
from pathlib import Path


def format_value(value: object) -> str:
    """One CSV field. None -> empty, bools lowercase, floats %.17g."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, numbers.Integral):
        return str(int(value))
    if isinstance(value, numbers.Real):
        return "%.17g" % float(value)
    text = str(value)
    if "," in text or "\n" in text or '"' in text:
        raise ValueError(f"field {text!r} needs quoting, which is not supported")
    return text


def write_csv(
    path: str | Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row width {len(row)} != header width {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
