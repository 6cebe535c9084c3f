"""Ingestion of daily index closes from CSV."""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySelection, NonMonotoneDates, ParseError


@dataclass(frozen=True)
class IndexSeries:
    dates: tuple[dt.date, ...]
    closes: np.ndarray
    source: str = ""

    def __len__(self) -> int:
        return len(self.dates)


def _parse_date(text: str, line: int) -> dt.date:
    text = text.strip()
    try:
        return dt.date.fromisoformat(text[:10])
    except ValueError:
        raise ParseError(f"unparseable date {text!r}", line) from None


def ingest_csv(
    path: str | Path,
    date_column: str = "Date",
    value_column: str = "Close",
    date_range: tuple[str | dt.date | None, str | dt.date | None] = (None, None),
) -> IndexSeries:
    """Read trading-day closes, keeping rows whose date lies in ``date_range`` (inclusive)."""
    start, end = (dt.date.fromisoformat(d) if isinstance(d, str) else d for d in date_range)
    dates: list[dt.date] = []
    closes: list[float] = []
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (date_column, value_column) if c not in header]
        if missing:
            raise ParseError(f"missing columns {missing}; header has {header}", 1)
        for row in reader:
            line = reader.line_num
            day = _parse_date(row[date_column] or "", line)
            if (start and day < start) or (end and day > end):
                continue
            raw = (row[value_column] or "").strip()
            try:
                value = float(raw)
            except ValueError:
                raise ParseError(f"unparseable value {raw!r} in column {value_column!r}", line) from None
            if not value > 0:
                raise ParseError(f"close must be positive, got {value}", line)
            if dates and day <= dates[-1]:
                raise NonMonotoneDates(f"line {line}: date {day} does not follow {dates[-1]}")
            dates.append(day)
            closes.append(value)
    if not dates:
        raise EmptySelection(f"no rows of {path} fall in {start}..{end}")
    return IndexSeries(tuple(dates), np.array(closes), str(path))
