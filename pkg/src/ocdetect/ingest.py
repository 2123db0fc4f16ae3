"""Line-oriented readers for observation streams (CSV or JSON lines)."""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path
from typing import IO, Iterator, Literal

import numpy as np

from .core_stats import InputError


class IngestError(InputError):
    """Malformed input; the message starts with the offending line number."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _parse_csv(line: str, lineno: int) -> list[float]:
    fields = line.split(",")
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        bad = next(f for f in fields if not _is_float(f))
        raise IngestError(lineno, f"non-numeric field {bad.strip()!r}") from None
    return vals


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_jsonl(line: str, lineno: int) -> list[float]:
    try:
        row = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(row, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in row):
        raise IngestError(lineno, "expected a JSON array of numbers")
    return [float(v) for v in row]


def read_rows(fh: IO[str], fmt: Literal["csv", "jsonl"] = "csv") -> Iterator[np.ndarray]:
    """Yield one float vector per data line.

    Blank lines and lines starting with '#' are skipped.  The dimension is
    taken from the first data row and enforced for every later row.  A final
    line without a newline that fails to parse is reported as a truncated
    file.
    """
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {fmt!r}")
    parse = _parse_csv if fmt == "csv" else _parse_jsonl
    p = None
    for lineno, raw in enumerate(fh, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            vals = parse(line, lineno)
        except IngestError as exc:
            if not raw.endswith("\n"):
                raise IngestError(lineno, f"premature end of input ({exc})") from None
            raise
        if p is None:
            p = len(vals)
        elif len(vals) != p:
            raise IngestError(lineno, f"expected {p} fields, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise IngestError(lineno, "non-finite value")
        yield np.array(vals)


def ingest(source="-", fmt: Literal["csv", "jsonl"] | None = None) -> Iterator[np.ndarray]:
    """Observation rows from a path (``"-"`` for standard input) or open file.

    The format defaults to the file suffix (``.jsonl``/``.json`` for JSON
    lines, CSV otherwise).
    """
    if hasattr(source, "read"):
        yield from read_rows(source, fmt or "csv")
        return
    if str(source) == "-":
        yield from read_rows(sys.stdin, fmt or "csv")
        return
    path = Path(source)
    if fmt is None:
        fmt = "jsonl" if path.suffix in (".jsonl", ".json", ".ndjson") else "csv"
    with path.open() as fh:
        yield from read_rows(fh, fmt)


def read_array(source, fmt=None) -> np.ndarray:
    rows = list(ingest(source, fmt))
    if not rows:
        raise InputError(f"{source}: no observations")
    return np.vstack(rows)
